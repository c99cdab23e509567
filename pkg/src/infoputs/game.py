"""Game primitives, benchmark play paths, payoff quadrature and designer functionals.

Payoff differences are callables ``delta_u(A, k)`` where ``k`` is the index of
the state in ``GameSpec.states``. Beliefs are probability vectors in the same
order; for two-state games a scalar ``mu = P(theta = theta*)`` is accepted
everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError, DomainError, InvariantViolation, NumericalError
from .trajectory import Trajectory

QUAD_ABS_TOL = 1e-12
TAIL_TOL = 1e-13
CHECK_GRID = 65


@dataclass(frozen=True)
class GameSpec:
    states: tuple
    delta_u: Callable[[float, int], float]
    r: float
    lam: float
    dominant: object
    flow_payoff: Optional[Callable[[int, float, int], float]] = None
    name: str = ""
    vectorized: bool = False
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.lam > 0:
            raise DomainError("switch_rate must be positive")
        if not self.r > 0:
            raise DomainError("discount_rate must be positive")
        if len(self.states) < 2:
            raise DomainError("need at least two states")
        if self.dominant not in self.states:
            raise DomainError("dominant state must be one of the states")
        grid = np.linspace(0.0, 1.0, CHECK_GRID)
        for k in range(len(self.states)):
            vals = np.array([self.delta_u(a, k) for a in grid])
            if np.any(np.diff(vals) <= 0):
                raise InvariantViolation(f"payoff difference not strictly increasing in A for state {self.states[k]!r}")
        if not self.delta_u(0.0, self.star) > 0:
            raise InvariantViolation("payoff difference at A=0 must be positive in the dominant state")

    @property
    def star(self):
        return self.states.index(self.dominant)

    @property
    def n_states(self):
        return len(self.states)

    @property
    def binary(self):
        return len(self.states) == 2

    def delta_u_array(self, A, k):
        A = np.asarray(A, dtype=float)
        if self.vectorized:
            return np.asarray(self.delta_u(A, k), dtype=float) * np.ones_like(A)
        return np.vectorize(lambda a: float(self.delta_u(a, k)))(A)

    def delta_u_max(self, grid=201):
        A = np.linspace(0.0, 1.0, grid)
        return max(float(np.max(np.abs(self.delta_u_array(A, k)))) for k in range(self.n_states))

    def u_bar(self, grid=201):
        """max |u|, used for truncation bounds. Without a flow payoff u(0,.,.) = 0 is assumed."""
        if self.flow_payoff is None:
            return self.delta_u_max(grid)
        A = np.linspace(0.0, 1.0, grid)
        return max(abs(float(self.flow_payoff(a, x, k)))
                   for a in (0, 1) for x in A for k in range(self.n_states))


def affine_game(a=1.0, b=2.0, c=-1.0, states=(0, 1), r=1.0, lam=1.0, dominant=None, name="affine"):
    """Delta u(A, theta) = a*A + b*index(theta) + c, with u(0, ., .) = 0."""
    if dominant is None:
        dominant = states[-1]
    if not a > 0:
        raise DomainError("affine slope a must be positive")

    def du(A, k):
        return a * A + b * k + c

    def u(action, A, k):
        return action * du(A, k)

    return GameSpec(tuple(states), du, float(r), float(lam), dominant, flow_payoff=u, name=name,
                    vectorized=True, meta={"family": "affine", "a": a, "b": b, "c": c})


def canonical_game(r=1.0, lam=1.0):
    """G1: two states, Delta u(A, theta) = A + 2 theta - 1."""
    return affine_game(1.0, 2.0, -1.0, (0, 1), r, lam, 1, name="G1")


def tabulated_game(A_grid, table, states=None, r=1.0, lam=1.0, dominant=None, name="tabulated"):
    """Payoff difference given on an A-grid, one row per state, with monotone (PCHIP) interpolation."""
    A_grid = np.asarray(A_grid, dtype=float)
    table = np.atleast_2d(np.asarray(table, dtype=float))
    if A_grid[0] > 0 or A_grid[-1] < 1 or np.any(np.diff(A_grid) <= 0):
        raise DomainError("A grid must be increasing and cover [0, 1]")
    if table.shape[1] != A_grid.size:
        raise DomainError("table rows must match the A grid")
    if states is None:
        states = tuple(range(table.shape[0]))
    if dominant is None:
        dominant = states[-1]
    interps = [PchipInterpolator(A_grid, row) for row in table]

    def du(A, k):
        return interps[k](A)

    return GameSpec(tuple(states), du, float(r), float(lam), dominant, name=name, vectorized=True,
                    meta={"family": "tabulated", "A_grid": A_grid.tolist(), "table": table.tolist()})


# ---------------------------------------------------------------- beliefs

def as_weights(mu, n_states, star):
    """Validated probability vector; a scalar is read as P(theta*) in a two-state game."""
    if np.ndim(mu) == 0:
        if n_states != 2:
            raise DomainError("scalar beliefs are only allowed for two-state games")
        m = float(mu)
        if not 0.0 <= m <= 1.0:
            raise DomainError(f"belief {m} outside [0, 1]")
        w = np.empty(2)
        w[star] = m
        w[1 - star] = 1.0 - m
        return w
    w = np.asarray(mu, dtype=float)
    if w.shape != (n_states,):
        raise DomainError("belief has the wrong length")
    if np.any(w < -1e-15) or abs(w.sum() - 1.0) > 1e-12:
        raise DomainError("belief must be a probability vector")
    return w


def star_coordinate(mu, star):
    return float(mu) if np.ndim(mu) == 0 else float(np.asarray(mu)[star])


# ---------------------------------------------------------------- paths

def _check_path_args(A0, t):
    if np.any(np.asarray(A0) < 0) or np.any(np.asarray(A0) > 1):
        raise DomainError("A0 must lie in [0, 1]")
    if np.any(np.asarray(t) < 0):
        raise DomainError("time must be nonnegative")


def upper_play_path(A0, lam, t):
    """Everyone switches to 1 at their next tick: 1 - (1 - A0) exp(-lam t)."""
    _check_path_args(A0, t)
    out = 1.0 - (1.0 - np.asarray(A0, dtype=float)) * np.exp(-lam * np.asarray(t, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def lower_play_path(A0, lam, t):
    """Everyone switches to 0 at their next tick: A0 exp(-lam t)."""
    _check_path_args(A0, t)
    out = np.asarray(A0, dtype=float) * np.exp(-lam * np.asarray(t, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def _path_fn(kind):
    if kind == "upper":
        return lambda A0, lam, s: 1.0 - (1.0 - A0) * math.exp(-lam * s)
    if kind == "lower":
        return lambda A0, lam, s: A0 * math.exp(-lam * s)
    raise DomainError(f"unknown path kind {kind!r}")


def quadrature_cutoff(game):
    beta = game.lam + game.r
    bound = max(game.delta_u_max(), 1e-300)
    return max(1.0, math.log(bound / (beta * TAIL_TOL)) / beta)


def state_value(game, A, k, path="upper", cutoff=None):
    """int_0^inf exp(-(lam + r) s) Delta u(A_s, theta_k) ds along the upper or lower path.

    Adaptive Gauss-Kronrod on [0, T] plus the exponential tail with A frozen at
    A_T; T is chosen so the whole tail is below 1e-13.
    """
    if not 0.0 <= A <= 1.0:
        raise DomainError("A must lie in [0, 1]")
    beta = game.lam + game.r
    T = quadrature_cutoff(game) if cutoff is None else cutoff
    p = _path_fn(path)
    lam = game.lam

    def integrand(s):
        return math.exp(-beta * s) * float(game.delta_u(p(A, lam, s), k))

    val, err = integrate.quad(integrand, 0.0, T, epsabs=QUAD_ABS_TOL, epsrel=1e-12, limit=200)
    if err > 1e-9:
        raise NumericalError("quadrature did not converge", err)
    tail = float(game.delta_u(p(A, lam, T), k)) * math.exp(-beta * T) / beta
    return val + tail


def state_values(game, A, path="upper", cutoff=None):
    T = quadrature_cutoff(game) if cutoff is None else cutoff
    return np.array([state_value(game, A, k, path, T) for k in range(game.n_states)])


def discounted_delta_value(game, mu, A):
    """Exponential-horizon payoff difference when all future switchers choose 1."""
    w = as_weights(mu, game.n_states, game.star)
    return float(w @ state_values(game, A, "upper"))


def discounted_delta_value_lower(game, mu, A):
    """Same as ``discounted_delta_value`` but when all future switchers choose 0."""
    w = as_weights(mu, game.n_states, game.star)
    return float(w @ state_values(game, A, "lower"))


# ---------------------------------------------------------------- functionals

@dataclass(frozen=True)
class PayoffFunctional:
    kind: str = "discounted_mean"
    rate: float = 1.0
    func: Optional[Callable[[Trajectory], float]] = None
    bound: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("discounted_mean", "terminal_level", "user_supplied"):
            raise ConfigurationError(f"unknown functional kind {self.kind!r}")
        if self.kind == "discounted_mean" and not self.rate > 0:
            raise ConfigurationError("discounted_mean needs a positive rate")
        if self.kind == "user_supplied" and (self.func is None or self.bound is None):
            raise ConfigurationError("user_supplied functional needs func and a finite bound")


def discounted_mean(rate=1.0):
    return PayoffFunctional("discounted_mean", rate)


@dataclass(frozen=True)
class PathSpec:
    A0: float
    regime: str = "all_up"
    breakpoints: Sequence[float] = ()
    flows: Sequence[str] = ()

    def __post_init__(self):
        if not 0.0 <= self.A0 <= 1.0:
            raise DomainError("A0 must lie in [0, 1]")
        if self.regime not in ("all_up", "all_down", "piecewise"):
            raise DomainError(f"unknown regime {self.regime!r}")
        if self.regime == "piecewise":
            bp = list(self.breakpoints)
            if not bp or bp[0] != 0.0 or any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
                raise DomainError("breakpoints must start at 0 and increase strictly")
            if len(self.flows) != len(bp):
                raise DomainError("one flow per breakpoint")

    def trajectory(self, lam, horizon=None):
        if self.regime != "piecewise":
            flow = "up" if self.regime == "all_up" else "down"
            tr = Trajectory(lam=lam, horizon=0.0 if horizon is None else horizon)
            tr.record(0.0, None, self.A0, self.A0, "start", flow)
            return tr
        horizon = self.breakpoints[-1] if horizon is None else horizon
        tr = Trajectory(lam=lam, horizon=horizon)
        a = self.A0
        for i, (b, f) in enumerate(zip(self.breakpoints, self.flows)):
            if i > 0:
                a = float(tr.A_at(b)[0])
            tr.record(b, None, a, a, "start" if i == 0 else "silence-segment", f)
        return tr


def _segment_discounted(a, dt, flow, r, lam):
    """int_0^dt exp(-r s) A_s ds for a segment starting at A=a (dt may be inf)."""
    e_r = np.where(np.isinf(dt), 0.0, np.exp(-r * np.where(np.isinf(dt), 0.0, dt)))
    e_rl = np.where(np.isinf(dt), 0.0, np.exp(-(r + lam) * np.where(np.isinf(dt), 0.0, dt)))
    hold = a * (1.0 - e_r) / r
    down = a * (1.0 - e_rl) / (r + lam)
    up = (1.0 - e_r) / r - (1.0 - a) * (1.0 - e_rl) / (r + lam)
    return np.where(flow == "up", up, np.where(flow == "down", down, hold))


def evaluate_functional(phi, traj):
    """Designer payoff of the aggregate-play path; the tail follows the last recorded flow."""
    if phi.kind == "user_supplied":
        val = float(phi.func(traj))
        if not math.isfinite(val) or abs(val) > phi.bound:
            raise ConfigurationError("user functional returned a value outside its declared bound")
        return val
    t = np.asarray(traj.t, dtype=float)
    a = np.asarray(traj.A, dtype=float)
    flows = np.asarray(traj.flow)
    if phi.kind == "terminal_level":
        last = flows[-1]
        return 1.0 if last == "up" else (0.0 if last == "down" else float(a[-1]))
    r, lam = phi.rate, traj.lam
    dt = np.append(np.diff(t), np.inf)
    seg = _segment_discounted(a, dt, flows, r, lam)
    return float(np.sum(np.exp(-r * t) * seg))


def path_value(phi, A0, lam, regime="all_up"):
    """phi of the upper (all_up) or lower (all_down) benchmark path from A0."""
    return evaluate_functional(phi, PathSpec(A0, regime).trajectory(lam))
