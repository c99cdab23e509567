"""Dominance-region geometry: thresholds, distance to the lower region, escape
probabilities and splits, and the constants that size the policy."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .errors import (DomainError, GeometryError, InvariantViolation, ParameterError,
                     PreconditionError)
from .game import as_weights, quadrature_cutoff, state_values, star_coordinate
from .signals import SignalSplit
from .trajectory import fmt

BISECT_XTOL = 1e-14


def belief_direction(mu, star):
    """(delta_{theta*} - mu) / (1 - mu(theta*)); +1 for scalar two-state beliefs."""
    if np.ndim(mu) == 0:
        if float(mu) >= 1.0:
            raise DomainError("direction undefined at the dominant-state point mass")
        return 1.0
    w = np.asarray(mu, dtype=float)
    if w[star] >= 1.0:
        raise DomainError("direction undefined at the dominant-state point mass")
    d = -w.copy()
    d[star] += 1.0
    return d / (1.0 - w[star])


def _slice_root(f):
    """Root in alpha of f on [0, 1], f increasing; 0 if f(0) > 0, 1 if f(1) < 0."""
    lo, hi = f(0.0), f(1.0)
    if lo > 0:
        return 0.0
    if hi < 0:
        return 1.0
    if lo == 0:
        return 0.0
    try:
        return optimize.bisect(f, 0.0, 1.0, xtol=BISECT_XTOL, rtol=4 * np.finfo(float).eps)
    except ValueError as exc:
        raise GeometryError(f"threshold root not bracketed: {exc}") from None


def _slice_value(values, star, direction):
    """alpha -> value of the belief delta* - (1 - alpha) d on the slice."""
    if direction is None:
        other = 1 - star
        return lambda a: a * values[star] + (1.0 - a) * values[other]
    d = np.asarray(direction, dtype=float)
    dv = float(d @ values)
    return lambda a: values[star] - (1.0 - a) * dv


def lower_dominance_threshold(game, A, direction=None):
    """Slice coordinate where the all-future-1 value changes sign."""
    if not 0.0 <= A <= 1.0:
        raise DomainError("A must lie in [0, 1]")
    v = state_values(game, A, "upper")
    return _slice_root(_slice_value(v, game.star, direction if not game.binary else None))


def upper_dominance_threshold(game, A, direction=None):
    """Slice coordinate where the all-future-0 value changes sign (clamped to [0, 1])."""
    if not 0.0 <= A <= 1.0:
        raise DomainError("A must lie in [0, 1]")
    v = state_values(game, A, "lower")
    return _slice_root(_slice_value(v, game.star, direction if not game.binary else None))


@dataclass(frozen=True)
class DominanceThresholds:
    """Tabulated thresholds plus the per-state value tables they came from.

    ``v_upper[k, j]`` is the exponential-horizon value in state k when everyone
    switches to 1 from A_grid[j]; ``v_lower`` is the all-switch-to-0 analogue.
    Between grid points everything is linearly interpolated.
    """

    A_grid: np.ndarray
    v_upper: np.ndarray
    v_lower: np.ndarray
    psi_ld: np.ndarray
    psi_ud: np.ndarray
    star: int
    lam: float
    r: float
    delta_u_max: float
    direction: Optional[np.ndarray] = None

    @property
    def n_states(self):
        return self.v_upper.shape[0]

    @property
    def binary(self):
        return self.n_states == 2

    def ld(self, A):
        return np.interp(A, self.A_grid, self.psi_ld)

    def ud(self, A):
        return np.interp(A, self.A_grid, self.psi_ud)

    def values(self, A, path="upper"):
        table = self.v_upper if path == "upper" else self.v_lower
        return np.array([np.interp(A, self.A_grid, row) for row in table])

    def weights(self, mu):
        return as_weights(mu, self.n_states, self.star)

    def delta_value(self, mu, A, path="upper"):
        """Belief-weighted value. Two-state: mu is P(theta*), scalar or array; otherwise a weight vector."""
        vals = self.values(A, path)
        if self.binary:
            m = np.asarray(mu, dtype=float)
            out = m * vals[self.star] + (1.0 - m) * vals[1 - self.star]
            return float(out) if out.ndim == 0 else out
        return float(self.weights(mu) @ vals)

    def in_ld(self, mu, A):
        """Belief in the (closed) lower dominance region at aggregate play A."""
        if self.binary:
            psi = self.ld(A)
            return (np.asarray(mu) <= psi) & (psi > 0)
        return self.delta_value(mu, A) <= 0.0

    def distance(self, mu, A):
        """Scaled distance D along the ray toward delta* to the lower region or the face mu*=0."""
        if self.binary:
            psi = self.ld(A)
            d = np.asarray(mu, dtype=float) - psi
            if np.any(d < -1e-12):
                raise PreconditionError("belief lies inside the lower dominance region")
            d = np.maximum(d, 0.0)
            return float(d) if np.ndim(d) == 0 else d
        w = self.weights(mu)
        if self.in_ld(w, A) and self.delta_value(w, A) < -1e-12:
            raise PreconditionError("belief lies inside the lower dominance region")
        d_hat = belief_direction(w, self.star)
        vals = self.values(A)
        slope = float(d_hat @ vals)
        level = float(w @ vals)
        alpha = w[self.star]
        if slope > 0:
            alpha = min(alpha, max(level, 0.0) / slope)
        return float(alpha)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["A", "psi_LD", "psi_UD"])
            for a, lo, hi in zip(self.A_grid, self.psi_ld, self.psi_ud):
                w.writerow([fmt(a), fmt(lo), fmt(hi)])


def thresholds_from_tables(A_grid, v_upper, v_lower, star, lam, r, delta_u_max, direction=None):
    """Build thresholds from precomputed per-state value tables (used by adapters too)."""
    A_grid = np.asarray(A_grid, dtype=float)
    v_upper = np.asarray(v_upper, dtype=float)
    v_lower = np.asarray(v_lower, dtype=float)
    n_states = v_upper.shape[0]
    if n_states > 2 and direction is None:
        direction = belief_direction(np.full(n_states, 1.0 / n_states), star)
    d = None if n_states == 2 else np.asarray(direction, dtype=float)
    psi_ld = np.array([_slice_root(_slice_value(v_upper[:, j], star, d)) for j in range(A_grid.size)])
    psi_ud = np.array([_slice_root(_slice_value(v_lower[:, j], star, d)) for j in range(A_grid.size)])
    if np.any(np.diff(psi_ld) > 1e-10) or np.any(np.diff(psi_ud) > 1e-10):
        raise InvariantViolation("dominance thresholds must be nonincreasing in A")
    if np.any(psi_ud < psi_ld - 1e-10):
        raise InvariantViolation("upper threshold below lower threshold")
    return DominanceThresholds(A_grid, v_upper, v_lower, psi_ld, psi_ud, star, float(lam), float(r),
                               float(delta_u_max), d)


def build_thresholds(game, grid=200, direction=None):
    """Quadrature value tables on a uniform A-grid and the thresholds they imply."""
    if grid < 2:
        raise DomainError("grid needs at least two points")
    A_grid = np.linspace(0.0, 1.0, grid)
    T = quadrature_cutoff(game)
    v_up = np.column_stack([state_values(game, a, "upper", T) for a in A_grid])
    v_lo = np.column_stack([state_values(game, a, "lower", T) for a in A_grid])
    return thresholds_from_tables(A_grid, v_up, v_lo, game.star, game.lam, game.r,
                                  game.delta_u_max(), direction)


def distance_D(thresholds, mu, A):
    return thresholds.distance(mu, A)


# ---------------------------------------------------------------- escape

def _escape_lp(weights, values):
    """max sum(x) s.t. 0 <= x <= mu, values . x >= 0. Returns (p*, x*)."""
    n = weights.size
    res = optimize.linprog(-np.ones(n), A_ub=-values.reshape(1, -1), b_ub=[0.0],
                           bounds=list(zip(np.zeros(n), weights)), method="highs")
    if res.status != 0:
        raise GeometryError(f"escape LP failed: {res.message}")
    x = np.clip(res.x, 0.0, weights)
    return float(x.sum()), x


def escape_probability_lp(thresholds, mu, A):
    w = thresholds.weights(mu)
    if w[thresholds.star] == 0.0:
        return 0.0
    return min(1.0, _escape_lp(w, thresholds.values(A))[0])


def escape_probability(thresholds, mu, A):
    """Largest probability with which a belief martingale can leave the lower region."""
    m_star = star_coordinate(mu, thresholds.star)
    if m_star == 0.0:
        return 0.0
    if not thresholds.in_ld(mu, A):
        return 1.0
    if thresholds.binary:
        psi = float(thresholds.ld(A))
        return min(1.0, float(mu) / psi)
    return escape_probability_lp(thresholds, mu, A)


def escape_split(thresholds, mu, A, eta):
    """Two-point split reaching just outside the lower region with probability p* - eta."""
    if not thresholds.in_ld(mu, A):
        raise PreconditionError("escape split requires a belief inside the lower dominance region")
    p_star = escape_probability(thresholds, mu, A)
    if not 0.0 < eta < p_star:
        raise ParameterError(f"eta={eta} must lie in (0, p*={p_star})")
    q = p_star - eta
    if thresholds.binary and np.ndim(mu) == 0:
        # when mu/q would leave the simplex the high atom is delta* and the low one keeps some mass on theta*
        up = min(float(mu) / q, 1.0)
        low = max((float(mu) - q * up) / (1.0 - q), 0.0)
        return SignalSplit((up, low), (q, 1.0 - q), "jump", prior=float(mu))
    w = thresholds.weights(mu)
    s = thresholds.star
    _, x = _escape_lp(w, thresholds.values(A))
    base = x / x.sum()
    target = w[s] / q
    kappa = 1.0 if base[s] >= 1.0 else (target - base[s]) / (1.0 - base[s])
    kappa = min(max(kappa, 0.0), 1.0)
    up = (1.0 - kappa) * base
    up[s] += kappa
    down = (w - q * up) / (1.0 - q)
    if np.any(down < -1e-14):
        raise GeometryError("escape split produced a negative posterior weight")
    down = np.clip(down, 0.0, None)
    if down[s] < 1e-14:
        down[s] = 0.0
    return SignalSplit((up, down), (q, 1.0 - q), "jump", prior=w)


# ---------------------------------------------------------------- constants

@dataclass(frozen=True)
class GameConstants:
    L: float
    l: float
    C: float
    lam: float
    r: float
    delta_u_max: float
    delta_bar: float
    L_psi: float
    M: float
    c_aux: float
    e_hi: float
    e_lo: float

    @classmethod
    def from_primitives(cls, L, l, C, lam, r, delta_u_max, delta_bar=None):
        if min(L, l, C, lam, r) <= 0:
            raise InvariantViolation("game constants must be strictly positive")
        L_psi = L / l
        M = 2.0 * L_psi
        cap = min(1.0, 4 * L / (lam * C), 4 * L / (lam * C * M))
        if delta_bar is None:
            delta_bar = cap
        elif not 0 < delta_bar <= cap + 1e-15:
            raise ParameterError(f"delta_bar must lie in (0, {cap:.6g}]")
        c_aux = lam * C / (2 * L)
        e_hi = lam * C / (4 * L)
        e_lo = lam * C / (4 * L * (1 + M))
        out = cls(float(L), float(l), float(C), float(lam), float(r), float(delta_u_max), float(delta_bar),
                  L_psi, M, c_aux, e_hi, e_lo)
        D = np.linspace(1e-6, 1.0, 1001)
        tol = delta_bar * lam * C * D * D / (4 * L * (D + M))
        if np.any(M * tol > D * (1 + 1e-12)) or np.any(tol >= 1):
            raise InvariantViolation("tolerance schedule violates M*TOL(D) <= D")
        return out

    def replace(self, **kw):
        base = dict(L=self.L, l=self.l, C=self.C, lam=self.lam, r=self.r,
                    delta_u_max=self.delta_u_max, delta_bar=None)
        base.update(kw)
        return GameConstants.from_primitives(**base)

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def constants_from_thresholds(thresholds, safety=0.99, delta_bar=None):
    A = thresholds.A_grid
    v = thresholds.v_upper
    s = thresholds.star
    slopes = np.diff(v, axis=1) / np.diff(A)
    if np.any(slopes <= 0):
        raise InvariantViolation("all-future-1 value is not increasing in A")
    L = float(slopes.max())
    others = np.delete(v, s, axis=0)
    l = float(np.min(v[s] - others.max(axis=0)))
    if l <= 0:
        raise InvariantViolation("value not increasing toward the dominant state")
    C = safety * float(v[s].min())
    return GameConstants.from_primitives(L, l, C, thresholds.lam, thresholds.r, thresholds.delta_u_max,
                                         delta_bar)


def game_constants(game, grid=200, safety=0.99, delta_bar=None, thresholds=None):
    """L, l, C and the derived policy constants by finite differences on an A-grid."""
    if grid < 64:
        raise DomainError("game_constants needs at least 64 grid points")
    th = thresholds if thresholds is not None else build_thresholds(game, grid)
    return constants_from_thresholds(th, safety, delta_bar)


def initial_radius(thresholds):
    gap = thresholds.psi_ud - thresholds.psi_ld
    if np.any(gap < -1e-10):
        raise InvariantViolation("negative gap between dominance thresholds")
    return float(max(gap.max(), 0.0))


def lipschitz_ok(thresholds, constants):
    slope = np.max(np.abs(np.diff(thresholds.psi_ld) / np.diff(thresholds.A_grid)))
    step = float(np.max(np.diff(thresholds.A_grid)))
    return bool(slope <= constants.L_psi + 2 * step), float(slope)


__all__ = [
    "belief_direction", "lower_dominance_threshold", "upper_dominance_threshold", "DominanceThresholds",
    "thresholds_from_tables", "build_thresholds", "distance_D", "escape_probability", "escape_probability_lp",
    "escape_split", "GameConstants", "constants_from_thresholds", "game_constants", "initial_radius",
    "lipschitz_ok",
]
