"""Shared setup for the experiment runners."""
import argparse
import json
import os

from infoputs.cli import emit_plot_data, fresh_directory
from infoputs.dominance import build_thresholds, constants_from_thresholds
from infoputs.game import canonical_game
from infoputs.policy import PolicyParams, PutsPolicy


def parser(doc):
    p = argparse.ArgumentParser(description=doc)
    p.add_argument("--out", default="runs", help="root directory for the run folder")
    p.add_argument("--seed", type=int, default=0)
    return p


def canonical_setup(eta=0.01, safety=0.99):
    g = canonical_game()
    th = build_thresholds(g, 200)
    params = PolicyParams(constants_from_thresholds(th, safety), eta=eta)
    return g, th, params, PutsPolicy(params, th)


def finish(root, stem, series, summary):
    out = fresh_directory(root, stem)
    emit_plot_data(series, os.path.join(out, "plot_data"))
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2)
    print(out)
    return out
