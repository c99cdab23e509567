"""The informational-puts policy and the alternative policies used in audits.

Policies are stateless: the caller passes the left limits (mu_{t-}, Z_{t-})
and current play A_t, and samples from the returned split itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dominance import GameConstants, belief_direction, escape_probability, escape_split
from .errors import DomainError, ParameterError
from .game import star_coordinate
from .signals import PolicyDecision, SignalSplit

# Relative slack on the trigger comparison. The simulators locate trigger
# times by root-finding, so at the event |A - Z| equals TOL only up to
# rounding; without the slack an exact hit could be read as silence.
TRIGGER_RTOL = 1e-9
TOL_RULES = ("exact_appendix", "quadratic_maintext")


@dataclass(frozen=True)
class PolicyParams:
    constants: GameConstants
    eta: float = 0.01
    tol_rule: str = "exact_appendix"
    m: Optional[float] = None
    finite_delta_bar: Optional[float] = None
    W: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ParameterError("eta must lie in (0, 1)")
        if self.tol_rule not in TOL_RULES:
            raise ParameterError(f"tol_rule must be one of {TOL_RULES}")
        if self.W < 0:
            raise ParameterError("gap floor W must be nonnegative")
        if self.m is not None and self.m <= 0:
            raise ParameterError("m must be positive")
        if self.finite_delta_bar is not None and not 0 < self.finite_delta_bar <= self.constants.delta_bar:
            raise ParameterError("finite delta_bar must lie in (0, delta_bar]")
        D = np.linspace(0.0, 1.0, 2001)
        t = tol(self, D)
        if np.any(t >= 1.0) or np.any(self.constants.M * t > D * (1 + 1e-12) + 1e-300):
            raise ParameterError("parameter schedule violates TOL < 1 or M*TOL(D) <= D")

    @property
    def delta_bar(self):
        return self.constants.delta_bar if self.finite_delta_bar is None else self.finite_delta_bar

    @property
    def finite_mode(self):
        return self.finite_delta_bar is not None

    @property
    def M(self):
        return self.constants.M

    @property
    def lam(self):
        return self.constants.lam


def _quadratic_coefficient(params, D):
    c = params.constants
    return params.delta_bar * c.lam * c.C / (4.0 * (c.L + params.W) * (D + c.M))


def tol(params, D):
    """Injection trigger TOL(D); zero at D = 0."""
    D = np.asarray(D, dtype=float)
    if np.any(D < 0) or np.any(D > 1 + 1e-12):
        raise DomainError("D must lie in [0, 1]")
    c = params.constants
    if params.tol_rule == "quadratic_maintext":
        m = _quadratic_coefficient(params, D) if params.m is None else params.m
        out = m * D * D
    else:
        LW = c.L + params.W
        safe = np.where(D > 0, D, 1.0)
        out = np.where(D > 0, params.delta_bar * c.lam * c.C * D / (4 * LW + 4 * LW * c.M / safe), 0.0)
    return float(out) if out.ndim == 0 else out


def tol_scalar_fn(params):
    """Plain-float TOL for tight scalar loops such as the contagion recursion."""
    c = params.constants
    LW = c.L + params.W
    k = params.delta_bar * c.lam * c.C
    if params.tol_rule == "quadratic_maintext" and params.m is not None:
        m = params.m
        return lambda D: m * D * D
    if params.tol_rule == "quadratic_maintext":
        return lambda D: k * D * D / (4.0 * LW * (D + c.M))
    return lambda D: k * D / (4 * LW + 4 * LW * c.M / D) if D > 0 else 0.0


def down(params, D):
    D = np.asarray(D, dtype=float)
    out = D / 2.0
    return float(out) if out.ndim == 0 else out


def target_drift(Z, lam, dt):
    """Target after dt of silence: 1 - (1 - Z) exp(-lam dt)."""
    if np.any(np.asarray(dt) < 0):
        raise DomainError("dt must be nonnegative")
    out = 1.0 - (1.0 - np.asarray(Z, dtype=float)) * np.exp(-lam * np.asarray(dt, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PolicyState:
    t: float
    mu_prev: object
    Z_prev: float
    A: float
    # set by a simulator that has located the trigger time itself; at tiny TOL
    # the rounding of |A - Z| exceeds any fixed relative slack
    at_trigger: bool = False

    def __post_init__(self):
        if not 0.0 <= self.Z_prev <= 1.0 or not 0.0 <= self.A <= 1.0:
            raise DomainError("Z and A must lie in [0, 1]")
        if self.t < 0:
            raise DomainError("time must be nonnegative")


def _silence(mu):
    return PolicyDecision(SignalSplit((mu,), (1.0,), "silence", prior=mu), "drift")


class PutsPolicy:
    """Silence on target, asymmetric injection off target, maximal escape inside the lower region."""

    kind = "puts"

    def __init__(self, params, thresholds):
        self.params = params
        self.thresholds = thresholds

    @property
    def lam(self):
        return self.params.lam

    @property
    def eta(self):
        return self.params.eta

    # -- hooks overridden by the alternatives
    def _jump_allowed(self, t):
        return True

    def _injection(self, mu, D, T):
        p = self.params
        d_hat = belief_direction(mu, self.thresholds.star)
        step_up = _up_step(p.M * T, mu, self.thresholds.star)
        dn = down(p, D)
        up_post = _move(mu, d_hat, step_up)
        down_post = _move(mu, d_hat, -dn)
        p_up = dn / (dn + step_up)
        return SignalSplit((up_post, down_post), (p_up, 1.0 - p_up), "injection", prior=mu)

    # -- scalar interface
    def decide(self, state):
        th = self.thresholds
        mu, A = state.mu_prev, state.A
        if star_coordinate(mu, th.star) in (0.0, 1.0):
            return _silence(mu)
        if th.in_ld(mu, A):
            if not self._jump_allowed(state.t) or escape_probability(th, mu, A) <= self.eta:
                return _silence(mu)
            return PolicyDecision(escape_split(th, mu, A, self.eta), "reset_to_A")
        D = th.distance(mu, A)
        if D <= 0.0:
            return _silence(mu)
        T = tol(self.params, D)
        if not state.at_trigger and abs(A - state.Z_prev) < T * (1.0 - TRIGGER_RTOL):
            return _silence(mu)
        return PolicyDecision(self._injection(mu, D, T), "reset_to_A")

    def tolerance(self, mu, A, t=0.0):
        """Trigger level for |A - Z| at (mu, A); 0 means act now, inf means never act.

        Vectorized over scalar beliefs in the two-state case.
        """
        th = self.thresholds
        if not th.binary:
            w = th.weights(mu)
            if w[th.star] in (0.0, 1.0):
                return math.inf
            if th.in_ld(w, A):
                ok = self._jump_allowed(t) and escape_probability(th, w, A) > self.eta
                return 0.0 if ok else math.inf
            return tol(self.params, th.distance(w, A))
        mu_a, A_a = np.broadcast_arrays(np.asarray(mu, dtype=float), np.asarray(A, dtype=float))
        psi = th.ld(A_a)
        inside = (mu_a <= psi) & (psi > 0)
        D = np.clip(mu_a - psi, 0.0, 1.0)
        out = np.asarray(tol(self.params, D), dtype=float)
        p_star = np.where(psi > 0, mu_a / np.where(psi > 0, psi, 1.0), 1.0)
        jump_ok = (p_star > self.eta) & self._jump_allowed(t)
        out = np.where(inside, np.where(jump_ok, 0.0, np.inf), out)
        out = np.where((mu_a == 0.0) | (mu_a == 1.0), np.inf, out)
        return float(out) if out.ndim == 0 else out

    def _injection_batch(self, mu, D, T):
        step_up = np.minimum(self.params.M * T, 1.0 - mu)
        dn = down(self.params, D)
        p_up = dn / np.where(dn + step_up > 0, dn + step_up, 1.0)
        return np.stack([mu + step_up, mu - dn], axis=-1), np.stack([p_up, 1.0 - p_up], axis=-1)

    def split_batch(self, mu, A, t=0.0):
        """Two-state splits fired at trigger states, as (posteriors, probs) arrays of shape (n, 2).

        Silence is encoded as the prior repeated with probabilities (1, 0).
        """
        th = self.thresholds
        if not th.binary:
            raise ParameterError("split_batch supports two-state games only")
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        A = np.broadcast_to(np.asarray(A, dtype=float), mu.shape)
        psi = th.ld(A)
        inside = (mu <= psi) & (psi > 0)
        D = np.clip(mu - psi, 0.0, 1.0)
        T = np.asarray(tol(self.params, D), dtype=float)
        post, prob = self._injection_batch(mu, D, T)
        p_star = np.where(psi > 0, mu / np.where(psi > 0, psi, 1.0), 1.0)
        q = np.clip(p_star - self.eta, 1e-300, 1.0)
        jump_ok = inside & (p_star > self.eta) & self._jump_allowed(t)
        hi = np.minimum(mu / q, 1.0)
        lo = np.maximum((mu - q * hi) / np.where(q < 1.0, 1.0 - q, 1.0), 0.0)
        post = np.where(jump_ok[:, None], np.stack([hi, lo], axis=-1), post)
        prob = np.where(jump_ok[:, None], np.stack([q, 1.0 - q], axis=-1), prob)
        quiet = (inside & ~jump_ok) | (mu == 0.0) | (mu == 1.0) | (~inside & (D <= 0))
        post = np.where(quiet[:, None], np.stack([mu, mu], axis=-1), post)
        prob = np.where(quiet[:, None], np.array([1.0, 0.0]), prob)
        return post, prob

    def certified(self, mu, A, eps):
        """Inside the certified region {D >= eps} of this policy (two-state, vectorized)."""
        th = self.thresholds
        return (np.asarray(mu) - th.ld(A) >= eps) & ~th.in_ld(mu, A)


def _up_step(step, mu, star):
    # the ray toward delta* ends at alpha = 1 - mu*, reachable only deep inside the upper region
    return min(step, 1.0 - star_coordinate(mu, star))


def _move(mu, d_hat, step):
    if np.ndim(mu) == 0:
        out = float(mu) + step * d_hat
        if out < -1e-15 or out > 1 + 1e-15:
            raise ParameterError("posterior left the simplex; check the parameter schedule")
        return min(max(out, 0.0), 1.0)
    out = np.asarray(mu, dtype=float) + step * np.asarray(d_hat)
    if np.any(out < -1e-15):
        raise ParameterError("posterior left the simplex; check the parameter schedule")
    return out


class NoInformationPolicy(PutsPolicy):
    kind = "no_information"

    def decide(self, state):
        return _silence(state.mu_prev)

    def split_batch(self, mu, A, t=0.0):
        mu = np.atleast_1d(np.asarray(mu, dtype=float))
        return np.stack([mu, mu], axis=-1), np.tile([1.0, 0.0], (mu.size, 1))

    def tolerance(self, mu, A, t=0.0):
        out = np.full(np.broadcast(np.asarray(mu), np.asarray(A)).shape, np.inf)
        return float(out) if out.ndim == 0 else out


class ConclusiveBadNewsPolicy(PutsPolicy):
    """Injections either push beliefs up by M*TOL or reveal theta != theta* outright."""

    kind = "conclusive_bad_news"

    def _injection(self, mu, D, T):
        s = self.thresholds.star
        d_hat = belief_direction(mu, s)
        up_post = _move(mu, d_hat, _up_step(self.params.M * T, mu, s))
        m_star = star_coordinate(mu, s)
        bad = _move(mu, d_hat, -m_star)
        if np.ndim(bad) == 0:
            bad = 0.0
        else:
            bad[s] = 0.0
        q = m_star / star_coordinate(up_post, s)
        return SignalSplit((up_post, bad), (q, 1.0 - q), "injection", prior=mu)

    def _injection_batch(self, mu, D, T):
        up = np.minimum(mu + self.params.M * T, 1.0)
        q = mu / np.where(up > 0, up, 1.0)
        return np.stack([up, np.zeros_like(mu)], axis=-1), np.stack([q, 1.0 - q], axis=-1)


class DelayedJumpPolicy(PutsPolicy):
    kind = "delayed_jump"

    def __init__(self, params, thresholds, t_delay):
        super().__init__(params, thresholds)
        if t_delay < 0:
            raise ParameterError("t_delay must be nonnegative")
        self.t_delay = float(t_delay)

    def _jump_allowed(self, t):
        return t >= self.t_delay


def policy_step(params, thresholds, state):
    return PutsPolicy(params, thresholds).decide(state)


def make_policy(kind, params, thresholds, t_delay=None):
    if kind == "puts":
        return PutsPolicy(params, thresholds)
    return make_alternative_policy(kind, params, thresholds, t_delay)


def make_alternative_policy(kind, params, thresholds, t_delay=None):
    if kind == "no_information":
        return NoInformationPolicy(params, thresholds)
    if kind == "conclusive_bad_news":
        return ConclusiveBadNewsPolicy(params, thresholds)
    if kind == "delayed_jump":
        if t_delay is None:
            raise ParameterError("delayed_jump needs t_delay")
        return DelayedJumpPolicy(params, thresholds, t_delay)
    raise ParameterError(f"unknown policy kind {kind!r}")
