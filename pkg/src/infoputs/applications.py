"""Regime-change and stopping-game adapters, and the private-information bound.

Regime change: action 0 attacks at flow cost c, the regime fails at hazard
gamma(A, theta), and attacking when it fails pays 1. The relative value of
not attacking over the agent's next waiting time tau is

    Delta U = E int_0^tau e^{-rs} (c - f(s)) ds,   f(s) = gamma(A_s) exp(-int_0^s gamma(A_u) du).

Stopping game: action 1 is irreversible. Nobody who has stopped can leave, so
the unfavourable continuation holds A fixed, and the trigger schedule carries
the gap floor W.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from .dominance import (build_thresholds, constants_from_thresholds, escape_probability,
                        thresholds_from_tables)
from .errors import InvariantViolation, NumericalError, ParameterError, PreconditionError
from .game import GameSpec, path_value, star_coordinate
from .policy import PolicyParams

CHECK_GRID = 101


# ---------------------------------------------------------------- regime change

@dataclass(frozen=True)
class RegimeChangeSpec:
    """Hazard gamma(A, k) indexed by state position k, attack cost c, rates r and lam.

    ``affine`` holds per-state (intercept, slope) pairs when gamma is affine in
    A; the integrated hazard along exponential flows is then closed form.
    """

    gamma: Callable[[float, int], float]
    cost: float
    states: tuple = (0, 1)
    r: float = 1.0
    lam: float = 1.0
    affine: Optional[tuple] = None
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.cost > 0:
            raise ParameterError("attack cost must be positive")
        if not (self.r > 0 and self.lam > 0):
            raise ParameterError("r and lam must be positive")
        A = np.linspace(0.0, 1.0, CHECK_GRID)
        g = np.array([[self.gamma(a, k) for a in A] for k in range(len(self.states))])
        if np.any(g < 0):
            raise InvariantViolation("hazard must be nonnegative")
        if np.any(np.diff(g, axis=1) >= 0):
            raise InvariantViolation("hazard must be strictly decreasing in A")
        if np.any(np.diff(g, axis=0) >= 0):
            raise InvariantViolation("hazard must be strictly decreasing in the state")
        if not self.gamma(0.0, len(self.states) - 1) < self.cost:
            raise InvariantViolation("dominant-state condition gamma(0, top state) < c fails")

    @property
    def star(self):
        return len(self.states) - 1

    def gamma_bound(self):
        A = np.linspace(0.0, 1.0, CHECK_GRID)
        return max(float(self.gamma(a, k)) for a in A for k in range(len(self.states)))


def affine_regime(intercepts, slopes, cost, states=(0, 1), r=1.0, lam=1.0, name="affine-regime"):
    """gamma(A, k) = intercepts[k] + slopes[k] A."""
    a = tuple(float(x) for x in intercepts)
    b = tuple(float(x) for x in slopes)
    if len(a) != len(states) or len(b) != len(states):
        raise ParameterError("one intercept and one slope per state")

    def gamma(A, k):
        return a[k] + b[k] * A

    return RegimeChangeSpec(gamma, float(cost), tuple(states), float(r), float(lam), tuple(zip(a, b)), name,
                            {"family": "affine", "intercepts": a, "slopes": b})


def r1_spec(r=1.0, lam=1.0):
    """R1: gamma(A, theta) = (1.5 - theta)(1 - A/2), c = 0.6, two states."""
    return affine_regime((1.5, 0.5), (-0.75, -0.25), 0.6, (0, 1), r, lam, name="R1")


def _flow(A0, lam, kind):
    if kind == "upper":
        return lambda s: 1.0 - (1.0 - A0) * np.exp(-lam * s)
    if kind == "lower":
        return lambda s: A0 * np.exp(-lam * s)
    if kind == "constant":
        return lambda s: A0 + 0.0 * np.asarray(s)
    raise ParameterError(f"unknown path kind {kind!r}")


def _cum_hazard_affine(a, b, A0, lam, kind, s):
    """int_0^s (a + b A_u) du along an exponential flow, closed form."""
    s = np.asarray(s, dtype=float)
    decay = -np.expm1(-lam * s) / lam
    if kind == "upper":
        return a * s + b * (s - (1.0 - A0) * decay)
    if kind == "lower":
        return a * s + b * A0 * decay
    return (a + b * A0) * s


def _horizon(spec, tail=1e-12):
    return -math.log(tail * spec.r) / (spec.r + spec.lam) + 1.0


def regime_state_value(spec, A0, k, path="upper", rel=1e-11):
    """int_0^inf e^{-(r + lam) s} (c - f(s)) ds in state k along an exponential flow from A0.

    Averaging over the Exp(lam) waiting time turns e^{-rs} into e^{-(r+lam)s}.
    """
    beta = spec.r + spec.lam
    A_of = _flow(A0, spec.lam, path)
    T = _horizon(spec)
    if spec.affine is not None:
        a, b = spec.affine[k]

        def f(s):
            return (a + b * A_of(s)) * np.exp(-_cum_hazard_affine(a, b, A0, spec.lam, path, s))
    else:
        def f(s):
            H, _ = integrate.quad(lambda u: spec.gamma(float(A_of(u)), k), 0.0, s, epsabs=1e-13, limit=200)
            return spec.gamma(float(A_of(s)), k) * math.exp(-H)
    val, err = integrate.quad(lambda s: math.exp(-beta * s) * (spec.cost - float(f(s))), 0.0, T,
                              epsabs=1e-12, epsrel=rel, limit=400)
    if not math.isfinite(val) or err > 1e-8:
        raise NumericalError("regime-change quadrature did not converge", err)
    return val


def regime_delta_value(spec, mu, A, path="upper"):
    """Expected relative value of not attacking at belief mu (weight on the top state for two states)."""
    vals = np.array([regime_state_value(spec, A, k, path) for k in range(len(spec.states))])
    if len(spec.states) == 2:
        m = float(mu)
        return m * vals[1] + (1.0 - m) * vals[0]
    w = np.asarray(mu, dtype=float)
    return float(w @ vals)


def regime_fixed_tau_value(spec, path_fn, k, tau, n=4001):
    """Delta U(A, theta_k, tau | 0) for an arbitrary path function s -> A_s (trapezoid on n nodes)."""
    s = np.linspace(0.0, tau, n)
    A = np.clip(np.asarray(path_fn(s), dtype=float), 0.0, 1.0)
    g = np.array([spec.gamma(a, k) for a in A])
    H = integrate.cumulative_trapezoid(g, s, initial=0.0)
    f = g * np.exp(-H)
    return float(integrate.trapezoid(np.exp(-spec.r * s) * (spec.cost - f), s))


def survival_residual(spec, path_fn, k, T, n=None):
    """|int_0^T f ds - (1 - exp(-int_0^T gamma))|.

    H' = gamma and F' = gamma e^{-H} are integrated together by an
    eighth-order Runge-Kutta scheme at tight tolerance; the identity ties F(T)
    to H(T).
    """
    from scipy.integrate import solve_ivp

    def rhs(s, y):
        g = float(spec.gamma(float(np.clip(path_fn(s), 0.0, 1.0)), k))
        return [g, g * math.exp(-y[0])]

    sol = solve_ivp(rhs, (0.0, T), [0.0, 0.0], method="DOP853", rtol=1e-12, atol=1e-14)
    if not sol.success:
        raise NumericalError(f"survival integration failed: {sol.message}")
    H, F = sol.y[0, -1], sol.y[1, -1]
    return abs(F - (1.0 - math.exp(-H)))


def regime_tables(spec, grid=101):
    A = np.linspace(0.0, 1.0, grid)
    n = len(spec.states)
    up = np.array([[regime_state_value(spec, a, k, "upper") for a in A] for k in range(n)])
    lo = np.array([[regime_state_value(spec, a, k, "lower") for a in A] for k in range(n)])
    return A, up, lo


def regime_thresholds(spec, grid=101):
    """Dominance thresholds of the regime-change game, ready for the contagion certifier."""
    A, up, lo = regime_tables(spec, grid)
    bound = spec.cost + spec.gamma_bound()
    return thresholds_from_tables(A, up, lo, spec.star, spec.lam, spec.r, bound)


def regime_psi_ld(spec, A):
    """Belief on the top state at which the all-future-1 value vanishes (two states; 0 if never negative)."""
    if len(spec.states) != 2:
        raise ParameterError("regime_psi_ld covers two-state specs")
    v0 = regime_state_value(spec, A, 0, "upper")
    v1 = regime_state_value(spec, A, 1, "upper")
    if v0 >= 0:
        return 0.0
    return -v0 / (v1 - v0)


def lipschitz_constant(spec, grid=CHECK_GRID):
    """L_gamma = max |d gamma / dA| over a grid and L* = L_gamma^2/r^2 + L_gamma/r."""
    A = np.linspace(0.0, 1.0, grid)
    slopes = [np.max(np.abs(np.diff([spec.gamma(a, k) for a in A]) / np.diff(A))) for k in range(len(spec.states))]
    L_g = float(max(slopes))
    return L_g, L_g ** 2 / spec.r ** 2 + L_g / spec.r


def _random_path(rng, knots=8, T=10.0):
    """Piecewise-linear path on [0, T] with uniform knot values in [0, 1], constant afterwards."""
    x = np.linspace(0.0, T, knots)
    y = rng.uniform(0.0, 1.0, knots)
    return lambda s: np.interp(s, x, y)


def regime_lipschitz_check(spec, pairs=200, seed=0, tau_max=10.0):
    """Largest |Delta U(A) - Delta U(A')| / ||A - A'||_inf over random path pairs and waiting times.

    Also checks that raising a path pointwise raises Delta U. Raises
    InvariantViolation if either property fails.
    """
    rng = np.random.default_rng(seed)
    L_g, L_star = lipschitz_constant(spec)
    worst = 0.0
    s_check = np.linspace(0.0, tau_max, 2001)
    for _ in range(pairs):
        p, q = _random_path(rng, T=tau_max), _random_path(rng, T=tau_max)
        k = int(rng.integers(len(spec.states)))
        tau = float(rng.uniform(0.1, tau_max))
        gap = float(np.max(np.abs(p(s_check) - q(s_check))))
        if gap <= 0:
            continue
        d = abs(regime_fixed_tau_value(spec, p, k, tau) - regime_fixed_tau_value(spec, q, k, tau))
        worst = max(worst, d / gap)
        bump = float(rng.uniform(0.01, 0.3))
        higher = lambda s, p=p, bump=bump: np.minimum(p(s) + bump, 1.0)
        if not regime_fixed_tau_value(spec, higher, k, tau) > regime_fixed_tau_value(spec, p, k, tau):
            raise InvariantViolation("Delta U failed to increase under a pointwise-higher path")
    if worst > L_star:
        raise InvariantViolation(f"empirical Lipschitz ratio {worst:.6g} exceeds L* = {L_star:.6g}")
    return {"L_gamma": L_g, "L_star": L_star, "max_ratio": worst, "pairs": pairs}


# ---------------------------------------------------------------- stopping games

@dataclass(frozen=True)
class StoppingSpec:
    """Base game played as an irreversible stopping game; W = gap_bound / r unless given."""

    base: GameSpec
    gap_bound: Optional[float] = None
    W: Optional[float] = None
    irreversible: bool = True

    def __post_init__(self):
        if self.W is not None and self.W < 0:
            raise ParameterError("gap floor W must be nonnegative")
        if self.gap_bound is not None and self.gap_bound < 0:
            raise ParameterError("gap bound must be nonnegative")

    @property
    def floor(self):
        if self.W is not None:
            return float(self.W)
        bound = self.base.delta_u_max() if self.gap_bound is None else self.gap_bound
        return float(bound) / self.base.r


@dataclass(frozen=True)
class StoppingSetup:
    params: PolicyParams
    thresholds: object
    W: float


def stopping_thresholds(game, grid=200):
    """Lower threshold from the all-future-1 path, upper threshold from the frozen-A continuation."""
    base = build_thresholds(game, grid)
    A = base.A_grid
    frozen = np.array([game.delta_u_array(A, k) for k in range(game.n_states)]) / (game.r + game.lam)
    return thresholds_from_tables(A, base.v_upper, frozen, game.star, game.lam, game.r, game.delta_u_max(),
                                  base.direction)


def stopping_adapter(spec, A0=0.0, grid=200, safety=0.99, eta=0.01, tol_rule="exact_appendix"):
    """Policy parameters with the W-modified trigger, and thresholds seeded for the stopping game."""
    if A0 != 0.0:
        raise PreconditionError("stopping games start from A0 = 0")
    th = stopping_thresholds(spec.base, grid)
    consts = constants_from_thresholds(th, safety)
    params = PolicyParams(consts, eta=eta, tol_rule=tol_rule, W=spec.floor)
    if not np.any(th.psi_ud < 1.0):
        raise InvariantViolation("upper dominance region of the stopping game is empty")
    return StoppingSetup(params, th, spec.floor)


# ---------------------------------------------------------------- private information

def private_info_bound(game, thresholds, mu0, A0, phi):
    """Loss bound from private information: |p*(mu0, 1) - p*(mu0, A0)| (phi(upper) - phi(lower)).

    Zero outside the lower region and on the face mu* = 0.
    """
    m = star_coordinate(mu0, thresholds.star)
    p_A0 = float(escape_probability(thresholds, mu0, A0)) if m > 0 else 0.0
    p_1 = float(escape_probability(thresholds, mu0, 1.0)) if m > 0 else 0.0
    if m == 0.0 or not thresholds.in_ld(mu0, A0):
        return {"bound": 0.0, "p_star_A0": p_A0, "p_star_1": p_1}
    spread = path_value(phi, A0, game.lam, "all_up") - path_value(phi, A0, game.lam, "all_down")
    return {"bound": abs(p_1 - p_A0) * spread, "p_star_A0": p_A0, "p_star_1": p_1}


__all__ = [
    "RegimeChangeSpec", "affine_regime", "r1_spec", "regime_state_value", "regime_delta_value",
    "regime_fixed_tau_value", "survival_residual", "regime_tables", "regime_thresholds", "regime_psi_ld",
    "lipschitz_constant", "regime_lipschitz_check", "StoppingSpec", "StoppingSetup", "stopping_thresholds",
    "stopping_adapter", "private_info_bound",
]
