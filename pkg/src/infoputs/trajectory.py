"""Trajectory container shared by the path benchmarks and the simulators.

A trajectory is a list of events. Each event stores the state right after it
and the flow that governs aggregate play until the next event:

* ``up``   : everyone who ticks switches to 1, dA = lam (1 - A) dt
* ``down`` : everyone who ticks switches to 0, dA = -lam A dt
* ``hold`` : A constant (finite-N mode between clock ticks)

The flow recorded on the last event is used to extrapolate past the horizon.
Events produced by the simulators' near-boundary compression carry the tag
``fluid``; all others have an empty tag.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .errors import DomainError

EVENT_KINDS = ("start", "silence-segment", "injection", "jump", "clock-tick", "end")
FLOWS = ("up", "down", "hold")


def fmt(x):
    """Nine significant digits, the package-wide print precision."""
    return f"{float(x):.9g}"


@dataclass
class Trajectory:
    lam: float
    horizon: float
    seed: Optional[int] = None
    mode: str = "continuum"
    n_agents: Optional[int] = None
    t: List[float] = field(default_factory=list)
    mu: List[object] = field(default_factory=list)
    mu_prev: List[object] = field(default_factory=list)
    A: List[float] = field(default_factory=list)
    Z: List[float] = field(default_factory=list)
    kind: List[str] = field(default_factory=list)
    flow: List[str] = field(default_factory=list)
    tag: List[str] = field(default_factory=list)

    def record(self, t, mu, A, Z, kind, flow, mu_prev=None, tag=""):
        if kind not in EVENT_KINDS:
            raise DomainError(f"unknown event kind {kind!r}")
        if flow not in FLOWS:
            raise DomainError(f"unknown flow {flow!r}")
        if self.t and t < self.t[-1]:
            raise DomainError("event times must be nondecreasing")
        self.t.append(float(t))
        self.mu.append(mu)
        self.mu_prev.append(mu if mu_prev is None else mu_prev)
        self.A.append(float(A))
        self.Z.append(float(Z))
        self.kind.append(kind)
        self.flow.append(flow)
        self.tag.append(tag)

    def extend_ticks(self, times, A_values, Z_values, mu, flow):
        """Bulk-append clock ticks (finite mode)."""
        n = len(times)
        self.t.extend(float(x) for x in times)
        self.A.extend(float(x) for x in A_values)
        self.Z.extend(float(x) for x in Z_values)
        self.mu.extend([mu] * n)
        self.mu_prev.extend([mu] * n)
        self.kind.extend(["clock-tick"] * n)
        self.flow.extend([flow] * n)
        self.tag.extend([""] * n)

    def __len__(self):
        return len(self.t)

    @property
    def tail_flow(self):
        return self.flow[-1]

    def count(self, kind):
        return sum(1 for k in self.kind if k == kind)

    def mu_star(self, values=None):
        """Belief coordinate on the dominant state (scalar beliefs pass through)."""
        vals = self.mu if values is None else values
        out = []
        for m in vals:
            out.append(float(m) if np.ndim(m) == 0 else float(np.asarray(m)[0]))
        return np.asarray(out)

    def arrays(self):
        return (np.asarray(self.t), np.asarray(self.A), np.asarray(self.flow))

    def A_at(self, times):
        """Aggregate play at arbitrary times, using the exact flows between events."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        t = np.asarray(self.t)
        idx = np.searchsorted(t, times, side="right") - 1
        idx = np.clip(idx, 0, len(t) - 1)
        a0 = np.asarray(self.A)[idx]
        dt = np.maximum(times - t[idx], 0.0)
        flows = np.asarray(self.flow)[idx]
        decay = np.exp(-self.lam * dt)
        return np.where(flows == "up", 1.0 - (1.0 - a0) * decay,
                        np.where(flows == "down", a0 * decay, a0))

    def to_csv(self, path):
        mus = self.mu_star()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mu", "A", "Z", "event"])
            for i in range(len(self.t)):
                w.writerow([fmt(self.t[i]), fmt(mus[i]), fmt(self.A[i]), fmt(self.Z[i]), self.kind[i]])

    def belief_staircase(self):
        """(t, mu) points with a row pair at every belief discontinuity."""
        ts, ms = [], []
        now = self.mu_star()
        before = self.mu_star(self.mu_prev)
        for i, ti in enumerate(self.t):
            if self.kind[i] == "clock-tick":
                continue
            if before[i] != now[i]:
                ts.append(ti)
                ms.append(before[i])
            ts.append(ti)
            ms.append(now[i])
        return np.asarray(ts), np.asarray(ms)
