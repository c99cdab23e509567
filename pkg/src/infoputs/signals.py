"""Finite-support posterior distributions emitted by the designer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

MARTINGALE_TOL = 1e-12


@dataclass(frozen=True)
class SignalSplit:
    posteriors: tuple
    probs: tuple
    label: str
    prior: object = None

    def __post_init__(self):
        if self.label not in ("silence", "injection", "jump"):
            raise ParameterError(f"unknown split label {self.label!r}")
        p = np.asarray(self.probs, dtype=float)
        if len(self.posteriors) != p.size or p.size == 0:
            raise ParameterError("one probability per posterior")
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ParameterError("split probabilities must form a distribution")
        for post in self.posteriors:
            w = np.atleast_1d(np.asarray(post, dtype=float))
            if np.any(w < 0) or np.any(w > 1):
                raise ParameterError("posterior left the simplex")
        if self.prior is not None and self.residual > MARTINGALE_TOL:
            raise ParameterError(f"martingale identity violated (residual {self.residual:.3g})")

    @property
    def residual(self):
        """max-norm of sum_k p_k posterior_k - prior."""
        mean = sum(p * np.asarray(x, dtype=float) for p, x in zip(self.probs, self.posteriors))
        return float(np.max(np.abs(np.asarray(mean) - np.asarray(self.prior, dtype=float))))

    def sample(self, u):
        """Atom selected by a uniform draw u in [0, 1)."""
        acc = 0.0
        for post, p in zip(self.posteriors, self.probs):
            acc += p
            if u < acc:
                return post
        return self.posteriors[-1]


@dataclass(frozen=True)
class PolicyDecision:
    split: SignalSplit
    z_update: str

    def __post_init__(self):
        if self.z_update not in ("drift", "reset_to_A"):
            raise ParameterError(f"unknown target update {self.z_update!r}")
        if self.split.label == "silence" and (len(self.split.posteriors) != 1 or self.z_update != "drift"):
            raise ParameterError("silence keeps the belief and lets the target drift")
        if self.split.label == "injection" and self.z_update != "reset_to_A":
            raise ParameterError("an injection resets the target")
