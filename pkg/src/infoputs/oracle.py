"""Independent check of full implementation by iterated elimination on a discretized game.

The oracle does not reuse the certifier's value tables or thresholds: it
integrates its own value tables with Simpson's rule on a time grid truncated
at T, and it never uses the contagion radii. Only the policy (the object
being tested) is shared.

Elimination keeps, for every A-column, a threshold rho(A) above which action
1 has been proven strictly dominant under the round conjecture "1 on R, 0
elsewhere". A cell (mu, A) outside R is evaluated along the path where
everyone else plays 0 until the policy fires; the agent then collects the
all-1 value at children inside R and the all-0 value elsewhere. Cells are
promoted when the resulting lower bound is positive for them and for every
cell above them in the column.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import ConfigurationError, ParameterError
from .trajectory import fmt

BISECT_ITERS = 48


@dataclass
class RegionMap:
    mu_grid: np.ndarray
    A_grid: np.ndarray
    status: np.ndarray          # shape (mu, A); 1 certified-1, 0 certified-0, -1 undetermined
    rho: np.ndarray             # lowest certified belief per A column
    psi_ld: np.ndarray          # oracle's own lower threshold per A column
    rounds: int
    converged: bool
    tail_bound: float
    policy_kind: str

    def certified_one(self):
        return self.status == 1

    def counts(self):
        return {k: int(np.sum(self.status == v)) for k, v in (("one", 1), ("zero", 0), ("undetermined", -1))}

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mu", "A", "status"])
            for i, m in enumerate(self.mu_grid):
                for j, a in enumerate(self.A_grid):
                    w.writerow([fmt(m), fmt(a), int(self.status[i, j])])


class _Tables:
    """Per-state value tables along the all-1 and all-0 paths, truncated at T."""

    def __init__(self, game, h, T, n_A=401):
        n = int(round(T / h))
        if n < 2 or abs(n * h - T) > 1e-9 * T:
            raise ConfigurationError("horizon must be a multiple of the time step")
        s = np.arange(n + 1) * h
        self.A = np.linspace(0.0, 1.0, n_A)
        lam, beta = game.lam, game.r + game.lam
        disc = np.exp(-beta * s)
        up = 1.0 - (1.0 - self.A[:, None]) * np.exp(-lam * s)
        lo = self.A[:, None] * np.exp(-lam * s)
        self.star, self.other = game.star, 1 - game.star
        self.v_up = np.array([integrate.simpson(disc * game.delta_u_array(up, k), dx=h, axis=1) for k in range(2)])
        self.v_lo = np.array([integrate.simpson(disc * game.delta_u_array(lo, k), dx=h, axis=1) for k in range(2)])

    def value(self, mu, A, table):
        v = self.v_up if table == "upper" else self.v_lo
        return mu * np.interp(A, self.A, v[self.star]) + (1.0 - mu) * np.interp(A, self.A, v[self.other])

    def root(self, A, table, level=0.0):
        """Belief at which the tabulated value equals ``level``, clipped to [0, 1]."""
        v = self.v_up if table == "upper" else self.v_lo
        hi = np.interp(A, self.A, v[self.star])
        lo = np.interp(A, self.A, v[self.other])
        return np.clip((level - lo) / (hi - lo), 0.0, 1.0)


def _first_passage(game, policy, mu, A0, h, n):
    """Trigger time and the flow payoff accumulated before it, along the all-0 deviation path."""
    lam, beta = game.lam, game.r + game.lam
    star, other = game.star, 1 - game.star

    def flow(s, idx):
        A = A0[idx] * np.exp(-lam * s)
        m = mu[idx]
        return np.exp(-beta * s) * (m * game.delta_u_array(A, star) + (1 - m) * game.delta_u_array(A, other))

    def gap(s, idx):
        A = A0[idx] * np.exp(-lam * s)
        Z = 1.0 - (1.0 - A0[idx]) * np.exp(-lam * s)
        return Z - A - policy.tolerance(mu[idx], A, s)

    everything = np.arange(mu.size)
    t_hit = np.full(mu.size, np.inf)
    acc = np.zeros(mu.size)
    active = gap(0.0, everything) < 0
    t_hit[~active] = 0.0
    g_prev = flow(0.0, everything)
    for k in range(1, n + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        s0, s1 = (k - 1) * h, k * h
        fired = gap(s1, idx) >= 0
        calm = idx[~fired]
        g_now = flow(s1, calm)
        acc[calm] += 0.5 * h * (g_prev[calm] + g_now)
        g_prev[calm] = g_now
        hit = idx[fired]
        if hit.size:
            lo, hi = np.full(hit.size, s0), np.full(hit.size, s1)
            for _ in range(BISECT_ITERS):
                mid = 0.5 * (lo + hi)
                up = gap(mid, hit) >= 0
                hi = np.where(up, mid, hi)
                lo = np.where(up, lo, mid)
            t_hit[hit] = hi
            acc[hit] += 0.5 * (hi - s0) * (g_prev[hit] + flow(hi, hit))
            active[hit] = False
    return t_hit, acc


def dp_oracle(game, policy, h=0.02, grid=(60, 60), T=12.0, tail_tol=1e-4, d_points=4000, d_min=1e-3,
              max_rounds=20000):
    """Region map {1, 0, -1} on a (mu, A) display grid of shape ``grid``.

    Beliefs for the elimination live on a per-column grid of distances D
    above the oracle's own lower threshold, geometrically spaced from
    ``d_min`` to 1, so resolution is finest where contagion steps are short.
    """
    if not game.binary:
        raise ParameterError("the DP oracle covers two-state games")
    if h <= 0 or T <= 0:
        raise ConfigurationError("time step and horizon must be positive")
    tail = game.u_bar() * np.exp(-game.r * T) / game.r
    if tail > tail_tol:
        raise ConfigurationError(f"truncation bound {tail:.3g} exceeds tolerance {tail_tol:.3g}; raise T")
    n_mu, n_A = grid
    tabs = _Tables(game, h, T)
    A_cols = np.linspace(0.0, 1.0, n_A)
    psi_cols = tabs.root(A_cols, "upper")
    D = np.geomspace(d_min, 1.0, d_points)
    MU = psi_cols[:, None] + D[None, :]
    valid = MU <= 1.0
    mu_c = MU[valid]
    A_c = np.broadcast_to(A_cols[:, None], MU.shape)[valid]

    n = int(round(T / h))
    t_hit, flow = _first_passage(game, policy, mu_c, A_c, h, n)
    fired = np.isfinite(t_hit)
    s_f = t_hit[fired]
    A_T = A_c[fired] * np.exp(-game.lam * s_f)
    post, prob = policy.split_batch(mu_c[fired], A_T, s_f)
    disc = np.exp(-(game.r + game.lam) * s_f)[:, None]
    A_T2 = np.broadcast_to(A_T[:, None], post.shape)
    v_hi = tabs.value(post, A_T2, "upper")
    v_lo = tabs.value(post, A_T2, "lower")
    psi_T = tabs.root(A_T2, "upper")

    # round 0: the oracle's upper dominance region, tightened by the truncation bound
    rho = tabs.root(A_cols, "lower", level=tail) - psi_cols
    W = np.empty(mu_c.size)
    W[~fired] = flow[~fired] - tail
    converged = False
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        in_R = post >= psi_T + np.interp(A_T2, A_cols, rho) - 1e-12
        cont = np.where(in_R, v_hi, v_lo)
        W[fired] = flow[fired] + disc[:, 0] * np.sum(prob * cont, axis=1) - tail
        ok = np.ones(MU.shape, dtype=bool)
        ok[valid] = W > 0
        ok |= D[None, :] >= rho[:, None]
        suffix = np.flip(np.logical_and.accumulate(np.flip(ok, axis=1), axis=1), axis=1)
        first = np.where(suffix.any(axis=1), np.argmax(suffix, axis=1), D.size)
        new = np.where(first < D.size, D[np.minimum(first, D.size - 1)], np.inf)
        new = np.minimum(rho, new)
        if np.array_equal(new, rho):
            converged = True
            break
        rho = new

    mu_disp = np.linspace(0.0, 1.0, n_mu)
    M_, A_ = np.meshgrid(mu_disp, A_cols, indexing="ij")
    status = np.full(M_.shape, -1, dtype=np.int8)
    status[tabs.value(M_, A_, "upper") < -tail] = 0
    status[M_ >= (psi_cols + rho)[None, :] - 1e-12] = 1
    return RegionMap(mu_disp, A_cols, status, psi_cols + rho, psi_cols, rounds, converged, float(tail),
                     getattr(policy, "kind", type(policy).__name__))
