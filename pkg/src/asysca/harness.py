"""Deterministic discrete-time simulation of the coordinator and worker cores.

Three run modes are provided:

* ``run_asynchronous``         -- M cores solve surrogate subproblems with
  random integer service times; the coordinator consumes one completed
  solution per slot in completion order (FIFO, ties by core id).
* ``run_synchronous_genie``    -- every solve takes exactly one slot.
* ``run_practical_synchronous``-- a single worker; the update stream stalls
  while the surrogate is being minimized.

Time is slotted: one coherence interval per slot, service times are integer
slot counts sampled once at dispatch. All runs are bitwise reproducible
given the same seeds.
"""

import heapq
import io
from collections import namedtuple
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .optimizer import (
    build_combined_surrogate,
    solve_subproblem,
    stationarity_residual,
    update_iterate,
    update_tracker,
)
from .problem import NumericError, estimate_true_gradient


# ---------------------------------------------------------------------------
# Delay model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayModel:
    kind: str
    lo: int
    hi: int

    @classmethod
    def deterministic(cls, d):
        if d < 1:
            raise ValueError("service time must be >= 1 slot")
        return cls("deterministic", int(d), int(d))

    @classmethod
    def uniform(cls, lo, hi):
        if lo < 1 or hi < lo:
            raise ValueError("need 1 <= lo <= hi")
        return cls("uniform_int", int(lo), int(hi))

    @property
    def tau_max(self):
        return self.hi

    def sample(self, rng):
        if self.kind == "deterministic":
            return self.lo
        return int(rng.integers(self.lo, self.hi + 1))


# ---------------------------------------------------------------------------
# Trajectory and anchor log
# ---------------------------------------------------------------------------

@dataclass
class AnchorLog:
    anchors: np.ndarray  # anchors[t-1] = [t]

    def delays(self):
        t = np.arange(1, len(self.anchors) + 1)
        return t - self.anchors


def validate_anchor_log(log, K, tau):
    """Check the anchor-sequence invariants for a K-core run with max delay tau."""
    a = np.asarray(log.anchors, dtype=int)
    T = len(a)
    t = np.arange(1, T + 1)
    if np.any(t - a < 0) or np.any(t - a > tau):
        return False
    if np.any(a[: min(K, T)] != 1):
        return False
    tail = a[K:]
    if len(tail) != len(set(tail.tolist())):
        return False
    if len(tail) and (tail.min() < 2 or tail.max() > T):
        return False
    return True


@dataclass
class Trajectory:
    t: np.ndarray
    anchor: np.ndarray
    delta_sq: np.ndarray
    phi_sq: np.ndarray
    pi: np.ndarray
    objective: np.ndarray
    observables: dict = field(default_factory=dict)
    iterates: Optional[list] = None
    x_final: Optional[np.ndarray] = None
    y_final: Optional[np.ndarray] = None
    n_updates: int = 0

    def columns(self):
        cols = {
            "t": self.t,
            "anchor": self.anchor,
            "delta_sq": self.delta_sq,
            "phi_sq": self.phi_sq,
            "pi": self.pi,
            "objective": self.objective,
        }
        cols.update(self.observables)
        return cols

    def to_csv(self, path_or_buf):
        cols = self.columns()
        names = list(cols)
        if hasattr(path_or_buf, "write"):
            _write_csv(path_or_buf, names, cols)
        else:
            with open(path_or_buf, "w", encoding="utf-8", newline="\n") as fh:
                _write_csv(fh, names, cols)

    def to_csv_bytes(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue().encode("utf-8")


def format_value(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if np.isnan(v):
        return ""
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return format(v, ".17g")


def _write_csv(fh, names, cols):
    fh.write(",".join(names) + "\n")
    n = len(cols[names[0]])
    for i in range(n):
        fh.write(",".join(format_value(cols[name][i]) for name in names) + "\n")


class _Recorder:
    def __init__(self, T, store_iterates):
        self.T = T
        self.anchor = np.zeros(T, dtype=int)
        self.delta_sq = np.full(T, np.nan)
        self.phi_sq = np.full(T, np.nan)
        self.pi = np.full(T, np.nan)
        self.objective = np.full(T, np.nan)
        self.observables = {}
        self.iterates = [] if store_iterates else None
        self.n_updates = 0

    def observe(self, t, obs):
        if obs is None:
            return
        for key, val in obs.items():
            if key not in self.observables:
                self.observables[key] = np.full(self.T, np.nan)
            self.observables[key][t - 1] = val

    def finish(self, x, y):
        return Trajectory(
            t=np.arange(1, self.T + 1),
            anchor=self.anchor,
            delta_sq=self.delta_sq,
            phi_sq=self.phi_sq,
            pi=self.pi,
            objective=self.objective,
            observables=self.observables,
            iterates=self.iterates,
            x_final=x,
            y_final=y,
            n_updates=self.n_updates,
        )


@dataclass
class Diagnostics:
    """Optional expensive per-interval diagnostics (Phi and Pi samples)."""

    interval: int
    B: int
    rng: np.random.Generator

    def due(self, t):
        return self.interval > 0 and t % self.interval == 0


def _solve(problem, x, y, xi, hyper, tol):
    f_hat = problem.surrogate(x, xi)
    comb = build_combined_surrogate(x, y, f_hat, hyper.rho, hyper.mu)
    return solve_subproblem(comb, problem.regularizer, problem.constraint, tol=tol)


def _diagnose(rec, t, problem, hyper, diag, x_prev, x_t, y_t, job, tol):
    if t == 1:
        rec.phi_sq[t - 1] = float(y_t @ y_t)
    else:
        g_hat = estimate_true_gradient(problem, x_prev, diag.B, diag.rng)
        r = y_t - g_hat
        rec.phi_sq[t - 1] = float(r @ r)
    rec.pi[t - 1] = stationarity_residual(
        problem, job.xhat, job.x, job.y, job.xi,
        hyper.rho, hyper.mu, diag.B, diag.rng, tol=tol,
    )
    if problem.objective is not None:
        rec.objective[t - 1] = problem.objective(x_t)


_Job = namedtuple("_Job", ["anchor", "x", "y", "xi", "xhat"])


def _draw_samples(problem, T, rng, samples):
    if samples is not None:
        if len(samples) < T:
            raise ValueError("need at least T samples")
        return samples
    if rng is None:
        raise ValueError("provide either samples or an rng")
    return [problem.sample(rng) for _ in range(T)]


# ---------------------------------------------------------------------------
# Run modes
# ---------------------------------------------------------------------------

def run_synchronous_genie(
    problem, hyper, T, x1, samples=None, rng=None,
    observer=None, diag=None, tol=1e-8, store_iterates=False,
):
    """Genie-aided synchronous run: one solve and one update per slot."""
    if T < 1:
        raise ValueError("T must be >= 1")
    samples = _draw_samples(problem, T, rng, samples)
    rec = _Recorder(T, store_iterates)
    x = np.asarray(x1, dtype=float)
    y = problem.stoch_grad(x, samples[0])
    x_prev = x
    for t in range(1, T + 1):
        xi = samples[t - 1]
        xhat = _solve(problem, x, y, xi, hyper, tol)
        d = xhat - x
        rec.anchor[t - 1] = t
        rec.delta_sq[t - 1] = float(d @ d)
        if store_iterates:
            rec.iterates.append(x.copy())
        if observer is not None:
            rec.observe(t, observer(t, x, xi))
        if diag is not None and diag.due(t):
            _diagnose(rec, t, problem, hyper, diag,
                      x_prev, x, y, _Job(t, x, y, xi, xhat), tol)
        x_next = update_iterate(x, xhat, hyper.gamma)
        y_next = update_tracker(y, problem.stoch_grad(x, xi), hyper.rho)
        x_prev, x, y = x, x_next, y_next
        rec.n_updates += 1
    return rec.finish(x, y)


def run_asynchronous(
    problem, hyper, cores, delay, T, x1, samples=None, rng=None,
    rng_delays=None, observer=None, diag=None, tol=1e-8, store_iterates=False,
):
    """Asynchronous run with ``cores`` workers and a FIFO completion queue.

    All cores start on the slot-1 job; the first K consumed solutions are
    therefore anchored at slot 1, after which anchors are unique. Ties in
    completion time are broken by ascending core id.
    """
    if cores < 1:
        raise ValueError("need at least one core")
    if T < 1:
        raise ValueError("T must be >= 1")
    if rng_delays is None:
        rng_delays = rng
    if rng_delays is None:
        raise ValueError("provide rng_delays (or rng) for service-time sampling")
    samples = _draw_samples(problem, T, rng, samples)
    rec = _Recorder(T, store_iterates)
    anchors = np.zeros(T, dtype=int)

    x = np.asarray(x1, dtype=float)
    y = problem.stoch_grad(x, samples[0])
    x_prev = x

    def service():
        s = delay.sample(rng_delays)
        if s > delay.tau_max:
            raise NumericError(
                f"sampled service time {s} exceeds tau_max {delay.tau_max}"
            )
        return s

    xhat1 = _solve(problem, x, y, samples[0], hyper, tol)
    job1 = _Job(1, x, y, samples[0], xhat1)
    initial = []
    for core in range(cores):
        heapq.heappush(initial, (service(), core, job1))
    pending = []
    wall = 0

    for t in range(1, T + 1):
        if initial:
            comp, core, job = heapq.heappop(initial)
        else:
            comp, core, job = heapq.heappop(pending)
        wall = max(wall + 1, comp)
        anchors[t - 1] = job.anchor
        rec.anchor[t - 1] = job.anchor
        d = job.xhat - x
        rec.delta_sq[t - 1] = float(d @ d)
        if store_iterates:
            rec.iterates.append(x.copy())
        if observer is not None:
            rec.observe(t, observer(t, x, samples[t - 1]))
        if diag is not None and diag.due(t):
            _diagnose(rec, t, problem, hyper, diag, x_prev, x, y, job, tol)
        x_next = update_iterate(x, job.xhat, hyper.gamma)
        y_next = update_tracker(y, problem.stoch_grad(x, samples[t - 1]), hyper.rho)
        x_prev, x, y = x, x_next, y_next
        rec.n_updates += 1
        if t + 1 <= T:
            xi_new = samples[t]
            xhat_new = _solve(problem, x, y, xi_new, hyper, tol)
            heapq.heappush(
                pending, (wall + service(), core, _Job(t + 1, x, y, xi_new, xhat_new))
            )
    return rec.finish(x, y), AnchorLog(anchors=anchors)


def run_practical_synchronous(
    problem, hyper, delay, T, x1, samples=None, rng=None,
    rng_delays=None, observer=None, diag=None, tol=1e-8, store_iterates=False,
):
    """Synchronous run where each surrogate solve blocks the update stream.

    The deployed iterate is held constant while a solve is in progress;
    observables are still recorded every slot with the held iterate.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if rng_delays is None:
        rng_delays = rng
    if rng_delays is None:
        raise ValueError("provide rng_delays (or rng) for service-time sampling")
    samples = _draw_samples(problem, T, rng, samples)
    rec = _Recorder(T, store_iterates)

    x = np.asarray(x1, dtype=float)
    y = problem.stoch_grad(x, samples[0])
    x_prev = x
    start = 1
    serv = delay.sample(rng_delays)
    for t in range(1, T + 1):
        rec.anchor[t - 1] = start
        if store_iterates:
            rec.iterates.append(x.copy())
        if observer is not None:
            rec.observe(t, observer(t, x, samples[t - 1]))
        if t == start + serv - 1:
            xi = samples[start - 1]
            xhat = _solve(problem, x, y, xi, hyper, tol)
            d = xhat - x
            rec.delta_sq[t - 1] = float(d @ d)
            if diag is not None and diag.due(t):
                _diagnose(rec, t, problem, hyper, diag,
                          x_prev, x, y, _Job(start, x, y, xi, xhat), tol)
            x_next = update_iterate(x, xhat, hyper.gamma)
            y_next = update_tracker(y, problem.stoch_grad(x, xi), hyper.rho)
            x_prev, x, y = x, x_next, y_next
            rec.n_updates += 1
            start = t + 1
            serv = delay.sample(rng_delays)
    return rec.finish(x, y)
