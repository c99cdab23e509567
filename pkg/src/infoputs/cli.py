"""Command-line entry point: ``puts <mode> --config <file> [--seed S] [--out DIR]``.

Each invocation writes into a fresh directory below the output root and
finishes with a ``manifest.json`` listing every file with its SHA-256.
Exit codes: 0 success, 2 certification or audit failure, 1 any other error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import __version__
from .config import MODES, ScenarioConfig, build_game, emit_scenario, parse_scenario
from .errors import CertificationFailure, ConfigurationError, PutsError
from .trajectory import fmt


@dataclass
class RunManifest:
    config: dict
    version: str
    seed: int
    mode: str
    directory: str
    wall_clock: float = 0.0
    files: List[str] = field(default_factory=list)
    checksums: dict = field(default_factory=dict)
    status: str = "ok"
    summary: dict = field(default_factory=dict)

    def write(self):
        path = os.path.join(self.directory, "manifest.json")
        with open(path, "w") as fh:
            json.dump(dataclasses.asdict(self), fh, indent=2, default=_json_default)
            fh.write("\n")
        return path


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def fresh_directory(root, stem):
    """Create ``root/stem-k`` for the smallest unused k; never reuses a directory."""
    os.makedirs(root, exist_ok=True)
    k = 1
    while True:
        path = os.path.join(root, f"{stem}-{k:03d}")
        try:
            os.mkdir(path)
            return path
        except FileExistsError:
            k += 1


def emit_plot_data(series, path):
    """One two-column CSV per series plus ``index.json`` describing them.

    ``series`` maps a name to ``(x, y, x_label, y_label)`` or ``(x, y)``.
    Returns the list of written files.
    """
    if not series:
        raise ConfigurationError("emit_plot_data needs at least one series")
    os.makedirs(path, exist_ok=True)
    index, written = {}, []
    for name, item in series.items():
        x, y = np.asarray(item[0], dtype=float), np.asarray(item[1], dtype=float)
        xl, yl = (item[2], item[3]) if len(item) == 4 else ("x", "y")
        if x.size == 0 or x.shape != y.shape:
            raise ConfigurationError(f"series {name!r} is empty or ragged")
        fname = f"{name}.csv"
        with open(os.path.join(path, fname), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([xl, yl])
            for a, b in zip(x, y):
                w.writerow([fmt(a), fmt(b)])
        index[name] = {"file": fname, "columns": [xl, yl], "rows": int(x.size)}
        written.append(os.path.join(path, fname))
    ipath = os.path.join(path, "index.json")
    with open(ipath, "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(ipath)
    return written


def _write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_rounded(doc), fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _rounded(x):
    """Floats to 9 significant digits so JSON output is stable at the printed precision."""
    if isinstance(x, dict):
        return {k: _rounded(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_rounded(v) for v in x]
    if isinstance(x, (float, np.floating)):
        v = float(x)
        return float(fmt(v)) if np.isfinite(v) else str(v)
    if isinstance(x, np.integer):
        return int(x)
    return x


# ---------------------------------------------------------------- model setup

@dataclass
class Setup:
    game: object
    thresholds: object
    constants: object
    params: object
    policy: object


def build_setup(config, need_policy=True):
    from .applications import RegimeChangeSpec, regime_thresholds
    from .dominance import build_thresholds, constants_from_thresholds
    from .policy import PolicyParams, make_policy

    game = build_game(config.game)
    grid = config.run.grid
    th = regime_thresholds(game, grid) if isinstance(game, RegimeChangeSpec) else build_thresholds(game, grid)
    pc = config.policy
    constants = constants_from_thresholds(th, pc.safety)
    if not need_policy:
        return Setup(game, th, constants, None, None)
    params = PolicyParams(constants, pc.eta, pc.tol_rule, pc.m, pc.finite_delta_bar)
    policy = make_policy(pc.kind, params, th, pc.t_delay)
    return Setup(game, th, constants, params, policy)


def _require_game_spec(setup, mode):
    from .game import GameSpec

    if not isinstance(setup.game, GameSpec):
        raise ConfigurationError(f"run.mode: {mode} is not available for the regime family")


def _profile(name, th, eps):
    from .simulate import adversarial_until, certified_region, compliant, upper_region

    if name == "compliant":
        return compliant()
    if name == "adversarial":
        return adversarial_until(certified_region(th, eps))
    return adversarial_until(upper_region(th))


# ---------------------------------------------------------------- modes

def _mode_constants(cfg, out):
    s = build_setup(cfg, need_policy=False)
    doc = s.constants.as_dict()
    return {"constants.json": doc}, {}, True, {k: doc[k] for k in ("L", "l", "M")}


def _mode_dominance(cfg, out):
    s = build_setup(cfg, need_policy=False)
    s.thresholds.to_csv(os.path.join(out, "thresholds.csv"))
    A = s.thresholds.A_grid
    series = {"psi_ld": (A, s.thresholds.psi_ld, "A", "psi_LD"),
              "psi_ud": (A, s.thresholds.psi_ud, "A", "psi_UD")}
    return {}, series, True, {"psi_ld_at_0": float(s.thresholds.psi_ld[0])}


def _mode_certify(cfg, out):
    from .contagion import certify_full_implementation

    s = build_setup(cfg)
    _require_game_spec(s, "certify")
    r = cfg.run
    cert = certify_full_implementation(s.game, s.params, s.thresholds, r.grid, r.eps, cfg.policy.kind,
                                       strict=False)
    cert.to_json(os.path.join(out, "certificate.json"))
    series = {}
    if r.oracle:
        from .oracle import dp_oracle

        rm = dp_oracle(s.game, s.policy)
        rm.to_csv(os.path.join(out, "oracle_regions.csv"))
    c = s.thresholds
    series["psi_ld"] = (c.A_grid, c.psi_ld, "A", "psi_LD")
    series["psi_ud"] = (c.A_grid, c.psi_ud, "A", "psi_UD")
    summary = {"certified": cert.certified, "min_margin": cert.min_margin, "n_failing": cert.n_failing}
    return {}, series, cert.certified, summary


def _mode_simulate(cfg, out):
    from .game import discounted_mean, evaluate_functional
    from .simulate import simulate_continuum

    s = build_setup(cfg)
    _require_game_spec(s, "simulate")
    r = cfg.run
    prof = _profile(r.profile, s.thresholds, r.eps)
    tr = simulate_continuum(s.game, s.policy, r.mu0, r.A0, prof, r.horizon, seed=r.seed, eps=r.eps)
    tr.to_csv(os.path.join(out, "trajectory.csv"))
    ts, ms = tr.belief_staircase()
    value = evaluate_functional(discounted_mean(r.rate), tr)
    summary = {"phi": value, "events": len(tr), "injections": tr.count("injection"), "jumps": tr.count("jump")}
    return {"summary.json": summary}, {"belief": (ts, ms, "t", "mu")}, True, summary


def _mode_finite(cfg, out):
    from .game import discounted_mean, evaluate_functional
    from .simulate import estimate_multiplicity_gap, simulate_finite

    s = build_setup(cfg)
    _require_game_spec(s, "finite")
    r = cfg.run
    if r.N is None:
        raise ConfigurationError("run.N: required for finite mode")
    prof = _profile(r.profile, s.thresholds, r.eps)
    tr = simulate_finite(s.game, s.policy, r.N, r.mu0, r.A0, prof, r.horizon, seed=r.seed, eps=r.eps,
                         record_ticks=False)
    tr.to_csv(os.path.join(out, "trajectory.csv"))
    phi = discounted_mean(r.rate)
    summary = {"phi": evaluate_functional(phi, tr), "events": len(tr), "injections": tr.count("injection")}
    docs = {"summary.json": summary}
    if r.trials > 1:
        docs["multiplicity_gap.json"] = estimate_multiplicity_gap(
            s.game, s.policy, r.N, r.mu0, r.A0, phi, r.trials, r.seed, horizon=r.horizon, eps=r.eps)
    ts, ms = tr.belief_staircase()
    return docs, {"belief": (ts, ms, "t", "mu")}, True, summary


def _mode_concentration(cfg, out):
    from .simulate import concentration_experiment, concentration_slope

    r = cfg.run
    if r.N is None and not r.Ns:
        raise ConfigurationError("run.N: concentration mode needs N or Ns")
    docs, series = {}, {}
    if r.N is not None:
        docs["concentration.json"] = concentration_experiment(cfg.game.switch_rate, r.A0, r.N, r.delta,
                                                              r.trials, r.seed)
    if r.Ns:
        slope, med = concentration_slope(cfg.game.switch_rate, r.A0, r.Ns, r.trials, r.seed)
        docs["slope.json"] = {"Ns": r.Ns, "median_sup": med, "slope": slope}
        series["median_sup"] = (r.Ns, med, "N", "median_sup")
    return docs, series, True, docs.get("concentration.json", docs.get("slope.json"))


def _mode_audit(cfg, out):
    from .game import discounted_mean
    from .simulate import sample_histories, sequential_optimality_audit

    s = build_setup(cfg)
    _require_game_spec(s, "audit")
    r = cfg.run
    hist = sample_histories(s.game, s.policy, r.trials, r.seed, eps=r.eps)
    rep = sequential_optimality_audit(s.game, s.policy, hist, discounted_mean(r.rate))
    summary = rep.summary()
    with open(os.path.join(out, "audit.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "mu_prev", "A", "source", "inside", "gap"])
        for h, g, ins in zip(rep.histories, rep.gaps, rep.inside):
            m = float(np.asarray(h.mu_prev).ravel()[0]) if np.ndim(h.mu_prev) else float(h.mu_prev)
            w.writerow([fmt(h.t), fmt(m), fmt(h.A), h.source, int(ins), fmt(g)])
    return {"audit.json": summary}, {}, rep.passed, summary


def _mode_private_bound(cfg, out):
    from .applications import private_info_bound
    from .game import discounted_mean

    s = build_setup(cfg, need_policy=False)
    _require_game_spec(s, "private-bound")
    r = cfg.run
    doc = private_info_bound(s.game, s.thresholds, r.mu0, r.A0, discounted_mean(r.rate))
    doc.update(mu0=r.mu0, A0=r.A0)
    return {"private_bound.json": doc}, {}, True, doc


DISPATCH = {
    "constants": _mode_constants, "dominance": _mode_dominance, "certify": _mode_certify,
    "simulate": _mode_simulate, "finite": _mode_finite, "concentration": _mode_concentration,
    "audit": _mode_audit, "private-bound": _mode_private_bound,
}


def run(config, mode=None, seed=None, out=None):
    """Dispatch one scenario, write its outputs and return the manifest.

    A failed certificate or audit is still written out; the manifest status is
    then ``"failed"`` and :func:`main` exits with code 2.
    """
    if not isinstance(config, ScenarioConfig):
        raise ConfigurationError("run needs a ScenarioConfig")
    config = ScenarioConfig.from_dict(config.to_dict())
    if mode is not None:
        config.run.mode = mode
    if config.run.mode is None:
        raise ConfigurationError("run.mode: no mode given")
    if seed is not None:
        config.run.seed = seed
    if out is not None:
        config.output.directory = out
    config.check()
    m = config.run.mode
    directory = fresh_directory(config.output.directory, f"{m}-seed{config.run.seed}")
    start = time.perf_counter()
    try:
        docs, series, ok, summary = DISPATCH[m](config, directory)
    except PutsError as e:
        raise type(e)(f"{m}: {e}") from e
    fmts = config.output.formats
    if "json" in fmts:
        for name, doc in docs.items():
            _write_json(os.path.join(directory, name), doc)
    if series and "csv" in fmts:
        emit_plot_data(series, os.path.join(directory, "plot_data"))
    emit_scenario(config, os.path.join(directory, "scenario.yaml"))
    man = RunManifest(config.to_dict(), __version__, config.run.seed, m, directory,
                      wall_clock=time.perf_counter() - start, status="ok" if ok else "failed",
                      summary=_rounded(summary or {}))
    for root, _, names in os.walk(directory):
        for n in sorted(names):
            p = os.path.join(root, n)
            rel = os.path.relpath(p, directory)
            man.files.append(rel)
            man.checksums[rel] = sha256(p)
    man.files.sort()
    man.write()
    return man


def main(argv=None):
    ap = argparse.ArgumentParser(prog="puts", description="Informational puts: certification, simulation, audits.")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, help="YAML scenario file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None, help="output root (a fresh subdirectory is created)")
    args = ap.parse_args(argv)
    try:
        cfg = parse_scenario(args.config)
        man = run(cfg, args.mode, args.seed, args.out)
    except CertificationFailure as e:
        print(f"certification failed: {e}", file=sys.stderr)
        return 2
    except PutsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps({"directory": man.directory, "status": man.status, "summary": man.summary}, indent=2))
    return 0 if man.status == "ok" else 2


if __name__ == "__main__":
    sys.exit(main())
