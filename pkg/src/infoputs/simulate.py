"""Continuum and finite-population simulation, Monte Carlo experiments and the
sequential-optimality audit.

Players are not modelled as optimizers. A profile states which action a
ticking player picks; worst cases are certified elsewhere and the simulator
only estimates and demonstrates them. Players always pick 0 inside the lower
dominance region and at beliefs that put no weight on the dominant state.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np
from scipy import optimize

from .dominance import escape_probability
from .errors import ParameterError, PreconditionError, SimulationError
from .game import evaluate_functional, path_value, star_coordinate
from .policy import TRIGGER_RTOL, PolicyState, PutsPolicy, target_drift, tol, tol_scalar_fn
from .trajectory import Trajectory

SCAN_STEP = 0.02
BISECT_ITERS = 60
MAX_EVENTS = 100_000
TICK_BATCH = 4096
WORKERS_ENV = "PUTS_WORKERS"
REPLAY_RTOL, REPLAY_ATOL = 1e-6, 1e-13


# ---------------------------------------------------------------- rng

def make_rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def trial_rngs(seed, trials):
    """One independent counter-based stream per trial."""
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(trials)]


def worker_count():
    cap = os.environ.get(WORKERS_ENV)
    n = os.cpu_count() or 1
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ParameterError(f"{WORKERS_ENV} must be an integer") from None
    return n


def run_trials(fn, args_list, workers=None):
    """Map ``fn`` over argument tuples, in a process pool when more than one worker is allowed."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(args_list) < 2:
        return [fn(*a) for a in args_list]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*args_list), chunksize=max(1, len(args_list) // (4 * workers))))


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True)
class AgentProfile:
    """Which action a ticking player picks, apart from the forced 0 inside the lower region.

    ``adversarial_until`` players pick 0 while the state is outside ``region``;
    ``scripted`` players pick 0 during the listed ``(start, end)`` windows.
    """

    behavior: str = "compliant"
    region: Optional[Callable] = None
    schedule: tuple = ()
    initial_actions: Optional[tuple] = None

    def __post_init__(self):
        if self.behavior not in ("compliant", "adversarial_until", "scripted"):
            raise ParameterError(f"unknown profile behavior {self.behavior!r}")
        if self.behavior == "adversarial_until" and self.region is None:
            raise ParameterError("adversarial_until needs a region predicate")
        for a, b in self.schedule:
            if not 0 <= a < b:
                raise ParameterError("schedule windows must satisfy 0 <= start < end")

    def deviating(self, t, mu, A):
        A = np.asarray(A, dtype=float)
        t = np.broadcast_to(np.asarray(t, dtype=float), A.shape)
        if self.behavior == "compliant":
            return np.zeros(A.shape, dtype=bool)
        if self.behavior == "adversarial_until":
            return ~np.asarray(self.region(mu, A), dtype=bool)
        out = np.zeros(A.shape, dtype=bool)
        for a, b in self.schedule:
            out |= (t >= a) & (t < b)
        return out


def compliant():
    return AgentProfile("compliant")


def adversarial_until(region):
    return AgentProfile("adversarial_until", region=region)


def scripted(windows):
    return AgentProfile("scripted", schedule=tuple((float(a), float(b)) for a, b in windows))


def upper_region(thresholds):
    """Strict upper dominance region: action 1 is preferred whatever others do."""
    def region(mu, A):
        return np.asarray(star_coordinate(mu, thresholds.star)) > thresholds.ud(A) + 1e-12
    return region


def certified_region(thresholds, eps):
    """The certificate's coverage {D >= eps} together with the upper region."""
    up = upper_region(thresholds)

    def region(mu, A):
        m = np.asarray(star_coordinate(mu, thresholds.star))
        return (m - thresholds.ld(A) >= eps) | up(mu, A)
    return region


def band_region(thresholds, N, kappa=1.0):
    """{D >= kappa N^(-1/2)}: the finite-population stand-in for the (GN)^(-1/9) band."""
    return certified_region(thresholds, kappa / math.sqrt(N))


def _down_mask(thresholds, profile, t, mu, A):
    m = star_coordinate(mu, thresholds.star)
    forced = np.asarray(thresholds.in_ld(mu, A)) | (m == 0.0)
    return forced | profile.deviating(t, mu, A)


def _tail_flow(thresholds, mu, A, eps):
    return "up" if bool(certified_region(thresholds, eps)(mu, A)) else "down"


def _fire(policy, rng, tr, t, mu, A, Z_prev, max_events, at_trigger=False):
    """Apply the policy at the current state; returns (mu, Z, fired)."""
    dec = policy.decide(PolicyState(t, mu, Z_prev, A, at_trigger))
    if dec.split.label == "silence":
        return mu, Z_prev, False
    new = dec.split.sample(rng.random())
    if len(tr) > max_events:
        raise SimulationError("event budget exhausted; policy keeps firing")
    return new, A, (dec.split.label, mu)


# ---------------------------------------------------------------- near-boundary compression
#
# With play held off target, injections come every TOL(D) time units, and TOL
# vanishes faster than D at the lower boundary, so the discrete event chain
# piles up there in finite time. Once the up-step M TOL(D) is below
# FLUID_RATIO * D the chain is replaced by its small-step limit: D rises at the
# rate v = M TOL / (time per injection) and halves with hazard
# v / (D/2 + M TOL) per unit time, which is the per-injection down probability
# divided by the time per injection. With M TOL ~ a D^2 locally the survival
# to level X is closed form. Below D_MIN the belief is put on the boundary.

FLUID_RATIO = 0.01
D_MIN = 1e-12


def _fluid_applies(policy):
    th = policy.thresholds
    return th.binary and getattr(type(policy), "_injection", None) is PutsPolicy._injection \
        and getattr(policy, "kind", "") != "no_information"


def _fluid_exit_level(policy, A):
    """Largest D with M TOL(D) <= FLUID_RATIO * D at aggregate play A (0 if none)."""
    p = policy.params
    room = 1.0 - float(policy.thresholds.ld(A))
    cache = policy.__dict__.setdefault("_fluid_levels", {})
    if room in cache:
        return cache[room]
    f = lambda d: p.M * float(tol(p, d)) - FLUID_RATIO * d
    if room <= 0 or f(room * 1e-9) > 0:
        out = 0.0
    elif f(room) <= 0:
        out = room
    else:
        out = optimize.brentq(f, room * 1e-9, room, xtol=1e-14)
    cache[room] = out
    return out


def _fluid_run(policy, rng, t, mu, A, t_stop, gap_rate, psi_drift=0.0, d_cap=math.inf):
    """Advance the compressed injection chain from (t, mu) at fixed A.

    ``gap_rate`` g sets the time per injection, -ln(1 - TOL/g)/lam; ``psi_drift``
    is the rate at which the lower threshold rises under the current flow.
    Returns (t, D, outcome) with outcome 'exit', 'boundary' or 'stopped'; D is
    the distance to the lower threshold as it stands at the returned time.
    """
    p = policy.params
    lam = p.lam
    psi = float(policy.thresholds.ld(A))
    D = float(mu) - psi
    top = min(_fluid_exit_level(policy, A), d_cap)
    if gap_rate <= 0.0:
        return t_stop, D, "stopped"
    while True:
        if D < D_MIN:
            return t, 0.0, "boundary"
        if D >= top:
            return t, D, "exit"
        T = float(tol(p, D))
        u = p.M * T
        x = T / gap_rate
        # time per injection is -ln(1 - x)/lam; its ratio to x tends to 1 as x -> 0
        v = p.M * gap_rate * lam * (x / -math.log1p(-x) if x > 1e-12 else 1.0)
        v_eff = v - psi_drift
        if v_eff <= 0:
            # the threshold outruns the policy: D reaches 0 even without a down move
            t_zero = t + D / -v_eff if v_eff < 0 else math.inf
            if t_zero >= t_stop:
                return t_stop, D + v_eff * (t_stop - t), "stopped"
            return t_zero, 0.0, "boundary"
        a = u / (D * D)
        kappa = v / v_eff
        y = D / (1.0 + 2.0 * a * D) * rng.random() ** (-1.0 / (2.0 * kappa))
        X = y / (1.0 - 2.0 * a * y) if 2.0 * a * y < 1.0 else math.inf
        if X >= top:
            t_top = t + (top - D) / v_eff
            if t_top >= t_stop:
                return t_stop, D + v_eff * (t_stop - t), "stopped"
            return t_top, top, "exit"
        t_down = t + (X - D) / v_eff
        if t_down >= t_stop:
            return t_stop, D + v_eff * (t_stop - t), "stopped"
        t, D = t_down, X / 2.0


def _hold_chain(policy, rng, tr, t, mu, A, t_stop, flow, max_events):
    """Injections fired while A is held fixed, from a state just after an injection (Z = A).

    Each injection resets Z to A, so the next one comes after
    -ln(1 - TOL/(1 - A))/lam. Runs until t_stop, the lower boundary or a
    silent state, handing the chain to the fluid limit near the boundary.
    Returns (t, mu, Z, at_boundary).
    """
    p = policy.params
    lam = p.lam
    psi = float(policy.thresholds.ld(A))
    top = _fluid_exit_level(policy, A)
    T_of = tol_scalar_fn(p)
    Z = A
    if A >= 1.0:
        # Z can never rise above A
        return t, mu, Z, False
    exited = False
    while True:
        D = mu - psi
        if 0.0 < D < top and not exited:
            t_end, D_end, outcome = _fluid_run(policy, rng, t, mu, A, t_stop, 1.0 - A)
            new = psi + D_end
            tr.record(t_end, new, A, A, "injection", flow, mu, tag="fluid")
            if outcome != "exit":
                return t_end, new, A, outcome == "boundary"
            # the next injection is a discrete one from the exit level
            t, mu, Z, exited = t_end, new, A, True
            continue
        exited = False
        if not 0.0 < mu < 1.0 or D <= 0.0:
            return t, mu, Z, False
        T = T_of(D)
        if T >= 1.0 - A:
            return t, mu, Z, False
        t_next = t + -math.log1p(-T / (1.0 - A)) / lam
        if t_next >= t_stop:
            return t, mu, Z, False
        up = min(p.M * T, 1.0 - mu)
        dn = D / 2.0
        new = mu + up if rng.random() < dn / (dn + up) else mu - dn
        if len(tr) > max_events:
            raise SimulationError("event budget exhausted; policy keeps firing")
        tr.record(t_next, new, A, A, "injection", flow, mu)
        t, mu, Z = t_next, new, A


def _next_window_edge(profile, t):
    """First scripted window boundary strictly after t."""
    edges = [x for w in profile.schedule for x in w if x > t]
    return min(edges) if edges else math.inf


def _deviation_cap(th, profile, t, mu, A, n_scan=64, iters=40):
    """Distance D above which an adversarial_until profile stops deviating at (t, A), or inf."""
    if profile.behavior != "adversarial_until":
        return math.inf
    psi = float(th.ld(A))
    d0 = float(mu) - psi
    grid = np.geomspace(max(d0, D_MIN), max(1.0 - psi, d0 * 2), n_scan)
    dev = profile.deviating(t, psi + grid, np.full(n_scan, A))
    if dev.all():
        return math.inf
    k = int(np.argmin(dev))
    if k == 0:
        return d0
    lo, hi = grid[k - 1], grid[k]
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if bool(profile.deviating(t, psi + mid, A)):
            lo = mid
        else:
            hi = mid
    return hi


# ---------------------------------------------------------------- continuum

def simulate_continuum(game, policy, mu0, A0, profile, horizon, seed=None, eps=1e-3, rng=None,
                       max_events=MAX_EVENTS):
    """Event-driven path with exact exponential flows and root-found trigger times."""
    if not 0.0 <= A0 <= 1.0:
        raise ParameterError("A0 must lie in [0, 1]")
    if not 0 < horizon < math.inf:
        raise ParameterError("horizon must be positive and finite")
    th = policy.thresholds
    lam = game.lam
    rng = make_rng(seed) if rng is None else rng
    tr = Trajectory(lam=lam, horizon=float(horizon), seed=seed, mode="continuum")
    t, mu, A, Z = 0.0, mu0, float(A0), float(A0)
    down = bool(_down_mask(th, profile, t, mu, A))
    tr.record(t, mu, A, Z, "start", "down" if down else "up")
    step = SCAN_STEP / lam
    fluid = _fluid_applies(policy)

    def state_at(s, down_flow):
        decay = np.exp(-lam * s)
        a = A * decay if down_flow else 1.0 - (1.0 - A) * decay
        z = 1.0 - (1.0 - Z) * decay
        return a, z

    def trigger(s, down_flow):
        a, z = state_at(s, down_flow)
        return np.abs(a - z) >= np.asarray(policy.tolerance(mu, a, t + s)) * (1.0 - TRIGGER_RTOL)

    def event(s, down_flow):
        a, _ = state_at(s, down_flow)
        return trigger(s, down_flow) | (_down_mask(th, profile, t + s, mu, a) != down_flow)

    triggered = False
    while True:
        mu_new, Z_new, fired = _fire(policy, rng, tr, t, mu, A, Z, max_events, triggered)
        triggered = False
        if fired:
            label, mu_prev = fired
            mu, Z = mu_new, Z_new
            down = bool(_down_mask(th, profile, t, mu, A))
            tr.record(t, mu, A, Z, "jump" if label == "jump" else "injection", "down" if down else "up", mu_prev)
            if label == "injection" and down and fluid and 0.0 < mu - th.ld(A) < _fluid_exit_level(policy, A):
                t_stop = min(t + step, horizon, _next_window_edge(profile, t))
                slope = -(th.ld(min(A + 1e-6, 1.0)) - th.ld(max(A - 1e-6, 0.0))) / (min(A + 1e-6, 1.0) - max(A - 1e-6, 0.0))
                cap = _deviation_cap(th, profile, t, mu, A)
                t_end, D_end, _ = _fluid_run(policy, rng, t, mu, A, t_stop, 1.0, lam * A * max(slope, 0.0), cap)
                A = A * math.exp(-lam * (t_end - t))
                mu_prev, t = mu, t_end
                mu, Z = float(th.ld(A)) + D_end, A
                down = bool(_down_mask(th, profile, t, mu, A))
                tr.record(t, mu, A, Z, "injection", "down" if down else "up", mu_prev, tag="fluid")
            continue
        remaining = horizon - t
        if remaining <= 0:
            break
        down = bool(_down_mask(th, profile, t, mu, A))
        s = np.minimum(np.arange(1, math.ceil(remaining / step) + 1) * step, remaining)
        hit = event(s, down)
        if not hit.any():
            a, z = state_at(remaining, down)
            t, A, Z = horizon, float(a), float(z)
            break
        k = int(np.argmax(hit))
        lo, hi = (0.0 if k == 0 else s[k - 1]), s[k]
        for _ in range(BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            if event(np.array([mid]), down)[0]:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 4 * np.finfo(float).eps * max(t + hi, 1.0):
                break
        if hi <= 0.0 or t + hi <= t:
            raise SimulationError("time step underflow while locating an event")
        a, z = state_at(hi, down)
        triggered = bool(trigger(np.array([hi]), down)[0])
        t, A, Z = t + float(hi), float(a), float(z)
        now_down = bool(_down_mask(th, profile, t, mu, A))
        if now_down != down:
            tr.record(t, mu, A, Z, "silence-segment", "down" if now_down else "up")
        if len(tr) > max_events:
            raise SimulationError("event budget exhausted")
    tr.record(horizon, mu, A, Z, "end", _tail_flow(th, mu, A, eps))
    return tr


# ---------------------------------------------------------------- finite N

def _initial_actions(N, A0, initial_actions):
    if initial_actions is not None:
        acts = np.asarray(initial_actions, dtype=np.int8)
        if acts.shape != (N,) or np.any((acts != 0) & (acts != 1)):
            raise ParameterError("initial actions must be a 0/1 vector of length N")
        return acts.copy()
    k = A0 * N
    if abs(k - round(k)) > 1e-9:
        raise ParameterError("N * A0 must be an integer")
    acts = np.zeros(N, dtype=np.int8)
    acts[: int(round(k))] = 1
    return acts


def simulate_finite(game, policy, N, mu0, A0, profile, horizon, seed=None, eps=1e-3, rng=None,
                    initial_actions=None, record_ticks=True, max_events=MAX_EVENTS):
    """N players with independent Poisson(lam) clocks; A moves in steps of 1/N.

    The N clocks are handled as one Poisson(lam N) stream that picks a player
    uniformly at each tick. Ticks are drawn in batches; a batch is cut at the
    first policy event or change of the chosen action, and the unused ticks
    are discarded, which is exact because the clocks are memoryless.
    """
    if N < 1:
        raise ParameterError("N must be at least 1")
    if not 0 < horizon < math.inf:
        raise ParameterError("horizon must be positive and finite")
    th = policy.thresholds
    lam = game.lam
    rng = make_rng(seed) if rng is None else rng
    acts = _initial_actions(N, A0, profile.initial_actions if initial_actions is None else initial_actions)
    n1 = int(acts.sum())
    tr = Trajectory(lam=lam, horizon=float(horizon), seed=seed, mode="finite", n_agents=N)
    t, mu, Z = 0.0, mu0, n1 / N
    tr.record(t, mu, n1 / N, Z, "start", "hold")
    n_policy = 0
    fluid = _fluid_applies(policy)
    triggered = False
    while True:
        A = n1 / N
        mu_new, Z_new, fired = _fire(policy, rng, tr, t, mu, A, Z, max_events, triggered)
        triggered = False
        if fired:
            n_policy += 1
            if n_policy > max_events:
                raise SimulationError("event budget exhausted; policy keeps firing")
            label, mu_prev = fired
            mu, Z = mu_new, Z_new
            tr.record(t, mu, A, Z, "jump" if label == "jump" else "injection", "hold", mu_prev)
            if label == "injection" and fluid and t < horizon:
                # memoryless clocks: draw the next tick afresh and chain injections up to it
                t_tick = t + rng.exponential(1.0 / (lam * N))
                t_stop = min(t_tick, horizon)
                t_last, mu, Z_last, boundary = _hold_chain(policy, rng, tr, t, mu, A, t_stop, "hold", max_events)
                if boundary:
                    t, Z = t_last, Z_last
                    continue
                t, Z = t_stop, float(target_drift(Z_last, lam, t_stop - t_last))
                if t_tick < horizon:
                    who = int(rng.integers(N))
                    target = 0 if bool(_down_mask(th, profile, t, mu, A)) else 1
                    if acts[who] != target:
                        acts[who] = target
                        n1 += 1 if target == 1 else -1
                        if record_ticks:
                            tr.extend_ticks([t], [n1 / N], [Z], mu, "hold")
            continue
        if t >= horizon:
            break
        target = 0 if bool(_down_mask(th, profile, t, mu, A)) else 1
        gaps = rng.exponential(1.0 / (lam * N), TICK_BATCH)
        times = t + np.cumsum(gaps)
        who = rng.integers(0, N, TICK_BATCH)
        inside = times < horizon
        K = int(inside.sum())
        times, who = times[:K], who[:K]
        # A after each tick when every ticking player picks ``target``
        first = np.zeros(K, dtype=bool)
        if K:
            _, idx = np.unique(who, return_index=True)
            first[idx] = True
        change = first & (acts[who] != target)
        step = 1 if target == 1 else -1
        n_path = n1 + step * np.cumsum(change)
        A_seq = np.concatenate(([A], n_path / N))
        t_seq = np.concatenate(([t], times))
        last_open = K < TICK_BATCH  # no further tick before the horizon
        # tick k uses the action chosen at the state after tick k-1; the batch is valid through the first change
        tgt = np.where(_down_mask(th, profile, t_seq, mu, A_seq), 0, 1)
        flip = np.flatnonzero(tgt[1:] != target)
        c = int(flip[0]) + 1 if flip.size else K
        # interval k runs from t_seq[k] to the next tick with A = A_seq[k]; Z keeps drifting up
        Z_seq = target_drift(Z, lam, t_seq - t)
        tol = np.asarray(policy.tolerance(mu, A_seq, t_seq), dtype=float)
        now = np.abs(A_seq - Z_seq) >= tol * (1.0 - TRIGGER_RTOL)
        # aim at the exact level so the policy's slackened check passes at the hit time
        level = A_seq + tol
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            dt_hit = np.where(level < 1.0, np.log((1.0 - Z_seq) / (1.0 - level)) / lam, np.inf)
        t_hit = np.where(now, t_seq, t_seq + np.maximum(dt_hit, 0.0))
        end = np.append(times, horizon if last_open else t_seq[K])
        hit_ok = now | (t_hit < end)
        if not last_open:
            hit_ok[K] = False
        hits = np.flatnonzero(hit_ok[: c + 1])
        f = int(hits[0]) if hits.size else None
        upto = f if f is not None else c
        used = change[:upto]
        if used.any():
            movers = who[:upto][used]
            acts[movers] = target
            if record_ticks:
                tt = times[:upto][used]
                tr.extend_ticks(tt, n_path[:upto][used] / N, target_drift(Z, lam, tt - t), mu, "hold")
        if upto > 0:
            n1 = int(n_path[upto - 1])
        if f is not None:
            t_next = float(t_hit[f])
            triggered = True
        elif upto == K and last_open:
            t_next = float(horizon)
        else:
            t_next = float(times[upto - 1])
        Z, t = float(target_drift(Z, lam, t_next - t)), t_next
    A = n1 / N
    tr.record(horizon, mu, A, Z, "end", _tail_flow(th, mu, A, eps))
    return tr


def finite_tail_value(phi, tr):
    """phi with the recorded hold segments; past the horizon the closed-form tail flow applies."""
    return evaluate_functional(phi, tr)


def replay_events(traj, policy):
    """Recompute every policy event of a trajectory from its recorded pre-event state.

    Compressed near-boundary segments (tag ``fluid``) have no single
    pre-event state and are skipped. Returns the number of checked events;
    raises SimulationError on the first mismatch.
    """
    lam = traj.lam
    checked = 0
    for i in range(1, len(traj)):
        kind = traj.kind[i]
        if kind not in ("injection", "jump") or traj.tag[i] == "fluid":
            continue
        z_prev = target_drift(traj.Z[i - 1], lam, traj.t[i] - traj.t[i - 1])
        level = policy.tolerance(traj.mu_prev[i], traj.A[i], traj.t[i])
        if abs(traj.A[i] - z_prev) < level * (1.0 - REPLAY_RTOL) - REPLAY_ATOL:
            raise SimulationError(f"event {i} at t={traj.t[i]:.6g} fired below its trigger level")
        dec = policy.decide(PolicyState(traj.t[i], traj.mu_prev[i], z_prev, traj.A[i], True))
        posts = [np.asarray(p, dtype=float) for p in dec.split.posteriors]
        got = np.asarray(traj.mu[i], dtype=float)
        if dec.split.label != kind or not any(np.allclose(got, p, atol=1e-12) for p in posts):
            raise SimulationError(f"event {i} at t={traj.t[i]:.6g} does not replay")
        checked += 1
    return checked


# ---------------------------------------------------------------- experiments

def _sup_deviation(rng, lam, A0, N, trials):
    """sup_t |A^N_t - A_t| for all-compliant play, via the empirical CDF of switching times."""
    n0 = N - int(round(A0 * N))
    out = np.empty(trials)
    for k in range(trials):
        tau = np.sort(rng.exponential(1.0 / lam, n0))
        target = A0 + (1.0 - A0) * (1.0 - np.exp(-lam * tau))
        i = np.arange(1, n0 + 1)
        hi = np.abs(A0 + i / N - target)
        lo = np.abs(A0 + (i - 1) / N - target)
        end = abs(A0 + n0 / N - 1.0)
        out[k] = max(hi.max(initial=0.0), lo.max(initial=0.0), end)
    return out


def concentration_experiment(lam, A0, N, delta, trials, seed):
    from .contagion import unlucky_bound

    if trials < 100:
        raise ParameterError("concentration experiment needs at least 100 trials")
    sup = _sup_deviation(make_rng(seed), lam, A0, N, trials)
    hits = int(np.sum(sup > delta))
    return {"N": N, "delta": delta, "trials": trials, "empirical": hits / trials, "hits": hits,
            "bound": unlucky_bound(N, delta), "median_sup": float(np.median(sup)),
            "mean_sup": float(np.mean(sup))}


def concentration_slope(lam, A0, Ns, trials, seed):
    """Log-log slope of the median sup-deviation against N."""
    med = [float(np.median(_sup_deviation(r, lam, A0, N, trials)))
           for N, r in zip(Ns, trial_rngs(seed, len(Ns)))]
    slope = float(np.polyfit(np.log(Ns), np.log(med), 1)[0])
    return slope, med


def _mc_value(game, policy, mu0, A0, profile, phi, horizon, eps, rng, N=None):
    if N is None:
        tr = simulate_continuum(game, policy, mu0, A0, profile, horizon, eps=eps, rng=rng)
    else:
        tr = simulate_finite(game, policy, N, mu0, A0, profile, horizon, eps=eps, rng=rng, record_ticks=True)
    return evaluate_functional(phi, tr)


def adversarial_value(game, policy, mu0, A0, phi, mode="analytic", trials=1000, seed=0, eps=1e-3,
                      certificate=None, horizon=10.0):
    """Designer value when nature picks the worst equilibrium.

    Analytic mode needs a certificate for the puts policy; Monte Carlo mode
    uses the profile that deviates outside the certified region.
    """
    th = policy.thresholds
    phi_up = path_value(phi, A0, game.lam, "all_up")
    phi_lo = path_value(phi, A0, game.lam, "all_down")
    if mode == "analytic":
        if certificate is None or not certificate.certified:
            raise PreconditionError("analytic mode needs a successful certificate; use monte_carlo")
        if getattr(policy, "kind", "") != "puts":
            raise PreconditionError("analytic mode covers the puts policy only")
        m = star_coordinate(mu0, th.star)
        if m == 0.0:
            return phi_lo
        if not th.in_ld(mu0, A0):
            if th.distance(mu0, A0) < certificate.eps and not upper_region(th)(mu0, A0):
                raise PreconditionError("belief lies in the uncertified band next to the lower region")
            return phi_up
        p = escape_probability(th, mu0, A0)
        if p <= policy.eta:
            return phi_lo
        q = p - policy.eta
        return q * phi_up + (1.0 - q) * phi_lo
    if mode != "monte_carlo":
        raise ParameterError(f"unknown mode {mode!r}")
    profile = adversarial_until(certified_region(th, eps))
    vals = np.array([_mc_value(game, policy, mu0, A0, profile, phi, horizon, eps, r)
                     for r in trial_rngs(seed, trials)])
    return {"mean": float(vals.mean()), "se": float(vals.std(ddof=1) / math.sqrt(trials)), "trials": trials}


def estimate_multiplicity_gap(game, policy, N, mu0, A0, phi, trials, seed, kappa=1.0, horizon=10.0, eps=1e-3):
    """opt_N from compliant play, adv_N from play that deviates outside {D >= kappa N^(-1/2)}.

    Both use the same random streams trial by trial.
    """
    th = policy.thresholds
    adv_profile = adversarial_until(band_region(th, N, kappa))
    opt, adv = np.empty(trials), np.empty(trials)
    for k, ss in enumerate(np.random.SeedSequence(seed).spawn(trials)):
        opt[k] = _mc_value(game, policy, mu0, A0, compliant(), phi, horizon, eps,
                           np.random.Generator(np.random.Philox(ss)), N)
        adv[k] = _mc_value(game, policy, mu0, A0, adv_profile, phi, horizon, eps,
                           np.random.Generator(np.random.Philox(ss)), N)
    diff = opt - adv
    se = lambda x: float(x.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
    return {"N": N, "opt": float(opt.mean()), "opt_se": se(opt), "adv": float(adv.mean()), "adv_se": se(adv),
            "gap": float(diff.mean()), "gap_se": se(diff), "trials": trials}


# ---------------------------------------------------------------- audit

@dataclass(frozen=True)
class History:
    """A decision point: left limits (mu_{t-}, Z_{t-}), current play and the realized posterior."""

    t: float
    mu_prev: object
    A: float
    Z_prev: float
    mu_post: object
    source: str


@dataclass
class AuditReport:
    histories: List[History]
    gaps: np.ndarray
    inside: np.ndarray
    bound_inside: np.ndarray
    tolerance: float
    offending: List[int] = field(default_factory=list)

    @property
    def max_gap(self):
        return float(self.gaps.max()) if self.gaps.size else 0.0

    @property
    def max_gap_outside(self):
        g = self.gaps[~self.inside]
        return float(g.max()) if g.size else 0.0

    @property
    def max_gap_inside(self):
        g = self.gaps[self.inside]
        return float(g.max()) if g.size else 0.0

    @property
    def min_gap(self):
        return float(self.gaps.min()) if self.gaps.size else 0.0

    @property
    def passed(self):
        return not self.offending

    def summary(self):
        return {"n": len(self.histories), "n_inside": int(self.inside.sum()), "max_gap": self.max_gap,
                "max_gap_outside": self.max_gap_outside, "max_gap_inside": self.max_gap_inside,
                "min_gap": self.min_gap, "passed": self.passed, "n_offending": len(self.offending)}


def sample_histories(game, policy, n, seed, horizon=4.0, eps=1e-3):
    """Decision points collected from simulated paths with random starts and profiles.

    Each path contributes its policy events (with the realized posterior),
    the states right after them, and a few silent on-path times.
    """
    th = policy.thresholds
    rng = make_rng(seed)
    out = []
    profiles = [compliant(), adversarial_until(upper_region(th)), adversarial_until(certified_region(th, eps))]
    while len(out) < n:
        mu0 = float(rng.uniform(0.0, 1.0))
        A0 = float(rng.uniform(0.0, 1.0))
        prof = profiles[int(rng.integers(len(profiles)))]
        if rng.random() < 0.2:
            a = float(rng.uniform(0, horizon / 2))
            prof = scripted([(a, a + float(rng.uniform(0.05, 1.0)))])
        tr = simulate_continuum(game, policy, mu0, A0, prof, horizon, rng=rng, eps=eps)
        for i in range(1, len(tr)):
            if tr.kind[i] in ("injection", "jump"):
                # a fluid row aggregates infinitely many injections; only its end state is a decision point
                if tr.tag[i] != "fluid":
                    z_prev = float(target_drift(tr.Z[i - 1], tr.lam, tr.t[i] - tr.t[i - 1]))
                    out.append(History(tr.t[i], tr.mu_prev[i], tr.A[i], z_prev, tr.mu[i], tr.kind[i]))
                out.append(History(tr.t[i], tr.mu[i], tr.A[i], tr.Z[i], tr.mu[i], "post-" + tr.kind[i]))
        for s in rng.uniform(0, horizon, 2):
            i = int(np.searchsorted(tr.t, s, side="right") - 1)
            a = float(tr.A_at(s)[0])
            z = float(target_drift(tr.Z[i], tr.lam, s - tr.t[i]))
            dec = policy.decide(PolicyState(float(s), tr.mu[i], z, a))
            if dec.split.label == "silence":
                out.append(History(float(s), tr.mu[i], a, z, tr.mu[i], "on-path"))
    return out[:n]


def _branch_value(policy, mu, A, phi_up, phi_lo):
    th = policy.thresholds
    if star_coordinate(mu, th.star) == 0.0:
        return phi_lo
    if not th.in_ld(mu, A):
        return phi_up
    p = escape_probability(th, mu, A)
    if p <= policy.eta:
        return phi_lo
    q = p - policy.eta
    return q * phi_up + (1.0 - q) * phi_lo


def sequential_optimality_audit(game, policy, histories, phi, tolerance=1e-6):
    """Continuation value under the policy versus the re-optimized supremum at each history.

    The supremum at the pre-signal state is phi of the upper path outside the
    lower region and p* phi(upper) + (1 - p*) phi(lower) inside it. Outside,
    the realized branch is compared; inside, the ex-ante split value is.
    """
    th = policy.thresholds
    gaps, inside, bounds, bad = [], [], [], []
    for k, h in enumerate(histories):
        phi_up = path_value(phi, h.A, game.lam, "all_up")
        phi_lo = path_value(phi, h.A, game.lam, "all_down")
        m = star_coordinate(h.mu_prev, th.star)
        ins = bool(m > 0.0 and th.in_ld(h.mu_prev, h.A))
        if m == 0.0:
            sup = phi_lo
        elif ins:
            p = escape_probability(th, h.mu_prev, h.A)
            sup = p * phi_up + (1.0 - p) * phi_lo
        else:
            sup = phi_up
        if ins:
            dec = policy.decide(PolicyState(h.t, h.mu_prev, h.Z_prev, h.A))
            cont = sum(q * _branch_value(policy, x, h.A, phi_up, phi_lo)
                       for x, q in zip(dec.split.posteriors, dec.split.probs))
            bound = policy.eta * (phi_up - phi_lo) + tolerance
        else:
            cont = _branch_value(policy, h.mu_post, h.A, phi_up, phi_lo)
            bound = tolerance
        gap = sup - cont
        gaps.append(gap)
        inside.append(ins)
        bounds.append(bound)
        if gap > bound or gap < -tolerance:
            bad.append(k)
    return AuditReport(list(histories), np.asarray(gaps), np.asarray(inside, dtype=bool), np.asarray(bounds),
                       tolerance, bad)
