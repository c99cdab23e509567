"""Contagion recursion on dominance radii, the payoff lower bound, grid
certification of full implementation and the finite-population threshold."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import optimize

from .dominance import initial_radius
from .errors import CertificationFailure, InvariantViolation, ParameterError, PreconditionError
from .policy import down, tol, tol_scalar_fn

BISECT_XTOL = 1e-12
UNLUCKY_CONSTANTS = (256.0, 81.0)


@dataclass(frozen=True)
class ContagionSequence:
    radii: np.ndarray
    converged: bool
    iterations: int

    @property
    def last(self):
        return float(self.radii[-1])

    def tail_slope(self, start_fraction=0.5):
        """Least-squares slope of log c_n against log n over the tail of the sequence."""
        n = np.arange(1, self.radii.size)
        if n.size < 4:
            raise ValueError("sequence too short for a tail fit")
        k0 = int(n.size * start_fraction)
        x, y = np.log(n[k0:]), np.log(self.radii[1:][k0:])
        return float(np.polyfit(x, y, 1)[0])


def contagion_step(params, c_n):
    """Solve x + (M/2) TOL(x) = c_n for x in (0, c_n)."""
    if c_n < 0:
        raise ParameterError("radius must be nonnegative")
    if c_n == 0:
        return 0.0
    half_m = params.M / 2.0
    T = tol_scalar_fn(params)

    def f(x):
        return x + half_m * T(x) - c_n

    return optimize.bisect(f, 0.0, c_n, xtol=BISECT_XTOL, rtol=4 * np.finfo(float).eps)


def contagion_sequence(params, c0, stop_tol=1e-3, max_iter=10**6):
    if not c0 > 0:
        raise ParameterError("initial radius must be positive")
    radii = [float(c0)]
    while radii[-1] >= stop_tol and len(radii) - 1 < max_iter:
        nxt = contagion_step(params, radii[-1])
        if not nxt < radii[-1]:
            raise InvariantViolation("contagion radius failed to decrease")
        radii.append(nxt)
    return ContagionSequence(np.asarray(radii), radii[-1] < stop_tol, len(radii) - 1)


def next_threshold_direct(params, thresholds, psi_n):
    """Function-valued step used for validation: solve mu + (M/2) TOL(mu - psi_LD(A)) = psi_n(A) per grid point."""
    out = np.empty_like(psi_n)
    half_m = params.M / 2.0
    for j, (lo, target) in enumerate(zip(thresholds.psi_ld, psi_n)):
        g = lambda mu: mu + half_m * tol(params, max(mu - lo, 0.0)) - target
        out[j] = optimize.bisect(g, lo, target, xtol=BISECT_XTOL, rtol=4 * np.finfo(float).eps)
    return out


def lb_margin(game, params, thresholds, mu, A, c_n):
    """Lower bound on the payoff advantage of action 1 under the round-n conjecture.

    The exact all-future-1 value minus the loss from waiting for the next
    injection, TOL(c_n) L (1 + p_n) / lam, minus the bad-branch loss
    L (1 - p_n) / lam, with p_n the up-move probability at distance c_n.
    ``game`` is accepted for interface symmetry; values come from the thresholds.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(thresholds.in_ld(mu, A)):
        raise PreconditionError("lower bound requires beliefs outside the lower dominance region")
    c = params.constants
    L = c.L + params.W
    T = tol(params, c_n)
    dn = down(params, c_n)
    denom = dn + c.M * np.asarray(T)
    p_n = np.where(denom > 0, dn / np.where(denom > 0, denom, 1.0), 1.0)
    loss = (np.asarray(T) * L * (1 + p_n) + L * (1 - p_n)) / c.lam
    out = thresholds.delta_value(mu, A) - loss
    return float(out) if np.ndim(out) == 0 else out


def lb_floor(params, c_n):
    """Closed-form floor C (1 - delta_bar) / 2 * c_n from the proof."""
    return params.constants.C * (1.0 - params.delta_bar) / 2.0 * np.asarray(c_n)


@dataclass
class Certificate:
    grid: dict
    eps: float
    policy_kind: str
    certified: bool
    min_margin: float
    argmin_cell: tuple
    edge_min_slack: Optional[float]
    n_cells: int
    n_failing: int
    radii: dict
    parameters: dict = field(default_factory=dict)

    def to_json(self, path=None):
        doc = asdict(self)
        text = json.dumps(doc, indent=2, default=float)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    def covers(self, mu, A, thresholds):
        return np.asarray(mu) >= thresholds.ld(A) + self.eps


def certify_full_implementation(game, params, thresholds, grid=200, eps=1e-3, policy_kind="puts",
                                strict=True, max_iter=10**6):
    """Check the lower bound on every grid cell with mu >= psi_LD(A) + eps.

    A cell at distance D from the lower region lies in the band
    [c_{n+1}, c_n) of the contagion sequence and is checked against the
    round-n lower bound; cells beyond c_0 are already in the upper region.
    With ``policy_kind='no_information'`` nothing is injected, so the only
    valid bound is the all-future-0 value.
    """
    if not eps > 0:
        raise ParameterError("eps must be positive")
    mu_grid = np.linspace(0.0, 1.0, grid)
    A_grid = np.linspace(0.0, 1.0, grid)
    MU, AA = np.meshgrid(mu_grid, A_grid, indexing="ij")
    psi = thresholds.ld(AA)
    D = MU - psi
    cells = (D >= eps) & ~thresholds.in_ld(MU, AA)
    c0 = initial_radius(thresholds)
    mu_c, A_c, D_c = MU[cells], AA[cells], D[cells]
    lower_value = thresholds.delta_value(mu_c, A_c, "lower")
    seq = None
    edge_slack = None
    if policy_kind == "no_information":
        margin = lower_value
    elif policy_kind == "puts":
        if c0 <= 0:
            margin = thresholds.delta_value(mu_c, A_c)
        else:
            seq = contagion_sequence(params, c0, stop_tol=eps, max_iter=max_iter)
            radii = seq.radii
            asc = radii[::-1]
            # band n such that radii[n+1] <= D < radii[n]; D >= c0 maps to n = 0
            pos = np.searchsorted(asc, D_c, side="right")
            n = np.clip(radii.size - 1 - pos, 0, radii.size - 1)
            margin = lb_margin(game, params, thresholds, mu_c, A_c, radii[n])
            margin = np.where(D_c >= c0, np.maximum(margin, lower_value), margin)
            edge_slack = _edge_check(game, params, thresholds, radii, A_grid)
    else:
        raise ParameterError(f"certification not defined for policy kind {policy_kind!r}")
    if margin.size == 0:
        min_margin, arg = math.inf, (None, None)
    else:
        k = int(np.argmin(margin))
        min_margin, arg = float(margin[k]), (float(mu_c[k]), float(A_c[k]))
    ok = bool(min_margin > 0 and (edge_slack is None or edge_slack >= 0))
    radii_info = {"c0": c0}
    if seq is not None:
        radii_info.update(c1=float(seq.radii[1]) if seq.radii.size > 1 else None, c_last=seq.last,
                          iterations=seq.iterations, converged=seq.converged)
    c = params.constants
    cert = Certificate(
        grid={"mu": grid, "A": grid}, eps=eps, policy_kind=policy_kind, certified=ok,
        min_margin=min_margin, argmin_cell=arg, edge_min_slack=edge_slack, n_cells=int(margin.size),
        n_failing=int(np.sum(margin <= 0)), radii=radii_info,
        parameters={"L": c.L, "l": c.l, "C": c.C, "M": c.M, "delta_bar": params.delta_bar, "lam": c.lam,
                    "r": c.r, "eta": params.eta, "tol_rule": params.tol_rule, "W": params.W})
    if strict and not ok:
        raise CertificationFailure(f"nonpositive margin {min_margin:.3g} at cell (mu, A) = {arg}", cert)
    return cert


def _edge_check(game, params, thresholds, radii, A_grid, grid_tol=1e-9):
    """Minimum over rounds n and A of LB(psi^{n+1}(A); c_n) - floor(c_n) + grid_tol."""
    worst = math.inf
    psi = thresholds.ld(A_grid)
    chunk = 512
    for start in range(0, radii.size - 1, chunk):
        cn = radii[start:start + chunk][:, None]
        cn1 = radii[start + 1:start + 1 + chunk][:, None]
        cn = cn[:cn1.shape[0]]
        mu = psi[None, :] + cn1
        keep = mu <= 1.0
        if not np.any(keep):
            continue
        AA = np.broadcast_to(A_grid[None, :], mu.shape)
        lb = lb_margin(game, params, thresholds, mu[keep], AA[keep], np.broadcast_to(cn, mu.shape)[keep])
        slack = lb - lb_floor(params, np.broadcast_to(cn, mu.shape)[keep]) + grid_tol
        worst = min(worst, float(slack.min()))
    return worst


# ---------------------------------------------------------------- finite N

@dataclass(frozen=True)
class FiniteThreshold:
    N: int
    G: float
    offset: float
    delta_bar: float
    delta_bar_cap: float
    e_hi: float
    e_lo: float
    c_aux: float
    bound_first: float
    bound_second: float


def finite_threshold(constants, N, finite_delta_bar=None):
    """Sufficiency constant G and the offset (G N)^(-1/9) for N players."""
    if N < 1:
        raise ParameterError("N must be at least 1")
    c = constants
    cap = c.C * c.r / (4.0 * (c.e_hi * c.L + c.c_aux))
    db = cap / 2.0 if finite_delta_bar is None else float(finite_delta_bar)
    if not 0 < db < cap:
        raise ParameterError(f"finite delta_bar must lie in (0, {cap:.6g})")
    c_sum = sum(UNLUCKY_CONSTANTS)
    first = (c.M * db * c.e_lo / (2.0 * c.L_psi)) ** 4.5
    second = c.r * (c.e_lo * db) ** 4 / (2.0 * c_sum) * (c.C / 2.0 - 2.0 * db * (c.e_hi * c.L + c.c_aux) / c.r)
    G = min(first, second)
    if not G > 0:
        raise ParameterError("finite-population constant G is not positive")
    return FiniteThreshold(int(N), G, (G * N) ** (-1.0 / 9.0), db, cap, c.e_hi, c.e_lo, c.c_aux, first, second)


def unlucky_bound(N, delta):
    """(256 + 81) delta^-4 / N, clamped to 1."""
    return min(1.0, sum(UNLUCKY_CONSTANTS) * delta ** -4 / N)
