"""Executor for the switched optimization dynamics.

Runs the dwell-time automaton: the composite state (z, sigma, tau) flows
between scheduled mode switches, and a switch is permitted only while the
timer tau (replenished at rate delta, capped at n0) holds a full unit of
budget. Setting the timer rate to zero gives the ideal system whose
trajectories generate the limit-set samples; a positive rate plus a
ball-valued flow perturbation gives the perturbed system.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (DynamicsSpec, OptState, advance_step, make_rhs,
                       project_stacked, select_kappa, switching_product)
from .graph import LaplacianPair
from .objectives import SwitchedObjectiveFamily, lyapunov

# Slack on the dwell-time inequalities so borderline schedules are judged
# consistently by the generator, the validator and the jump gate.
ADT_TOL = 1e-9


class ScheduleError(ValueError):
    """A switching schedule or jump request violates the automaton."""


@dataclass(frozen=True)
class SwitchedProblem:
    """Everything that defines one switched scenario: coupling graph,
    per-mode objectives with the shared budget, and dwell parameters."""

    lap: LaplacianPair
    family: SwitchedObjectiveFamily
    delta: float
    n0: int

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.n0 < 1:
            raise ValueError("n0 must be a positive integer")
        if self.lap.n != self.family.n:
            raise ValueError("graph and objective dimensions differ")

    @property
    def n(self) -> int:
        return self.family.n

    @property
    def M(self) -> int:
        return self.family.M

    @property
    def d(self) -> float:
        return self.family.d

    def equilibrium(self, sigma: int) -> np.ndarray:
        """Stacked rest point (q*_sigma, 0) of mode sigma."""
        q = self.family.kkt(sigma).q_star
        return np.concatenate([q, np.zeros_like(q)])


@dataclass(frozen=True)
class HybridPoint:
    """Full automaton state."""

    z: OptState
    sigma: int
    tau: float


@dataclass(frozen=True)
class SwitchSchedule:
    """Ordered switch requests (time, target mode) with the dwell
    parameters they are meant to satisfy."""

    times: np.ndarray
    targets: np.ndarray
    delta: float
    n0: int

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        targets = np.asarray(self.targets, dtype=int)
        if times.ndim != 1 or targets.shape != times.shape:
            raise ValueError("times and targets must be 1-D with equal length")
        if times.size and np.any(np.diff(times) <= 0):
            raise ScheduleError("switch times must be strictly increasing")
        if times.size and np.any(times < 0):
            raise ScheduleError("switch times must be nonnegative")
        if targets.size > 1 and np.any(targets[1:] == targets[:-1]):
            raise ScheduleError("consecutive switch targets must differ")
        if self.delta < 0 or self.n0 < 1:
            raise ValueError("need delta >= 0 and n0 >= 1")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return self.times.size

    @property
    def events(self) -> list[tuple[float, int]]:
        return list(zip(self.times.tolist(), self.targets.tolist()))


def validate_schedule(sched: SwitchSchedule):
    """Check the average dwell-time bound on every interval.

    The switch count over [s, t] may exceed delta*(t-s) + n0 nowhere; it
    suffices to test intervals whose endpoints are switch times. Returns
    (True, None) or (False, info) where info describes the first
    violating interval.
    """
    t = sched.times
    m = t.size
    for i in range(m):
        # count of switches in [t_i, t_j] is j - i + 1
        allowed = sched.delta * (t[i:] - t[i]) + sched.n0
        counts = np.arange(1, m - i + 1)
        bad = np.nonzero(counts > allowed + ADT_TOL)[0]
        if bad.size:
            j = i + int(bad[0])
            info = {"s": float(t[i]), "t": float(t[j]),
                    "count": int(j - i + 1),
                    "allowed": float(allowed[bad[0]])}
            return False, info
    return True, None


def snap_to_grid(t: float, grid: float) -> float:
    return round(t / grid) * grid


def generate_schedule(seed: int, delta: float, n0: int, horizon: float, M: int,
                      initial_mode: int = 1, grid: float | None = None) -> SwitchSchedule:
    """Draw an admissible schedule by the token construction.

    Candidate switch times are uniform over [0, horizon] (snapped to the
    integration grid when given); a candidate is accepted only while the
    timer, replenished at rate delta and capped at n0, holds a full
    token. Targets are drawn uniformly from the other modes. The exact
    arithmetic here mirrors the simulator's jump gate, so every generated
    schedule simulates cleanly from a full initial budget.
    """
    if delta < 0 or horizon <= 0:
        raise ValueError("need delta >= 0 and horizon > 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    n_cand = int(np.ceil(2.0 * (delta * horizon + n0))) + 4
    cand = np.sort(rng.uniform(0.0, horizon, size=n_cand))
    if grid is not None:
        cand = np.round(cand / grid) * grid

    times: list[float] = []
    targets: list[int] = []
    current = initial_mode
    tau_anchor = float(n0)
    t_anchor = 0.0
    for t in cand:
        t = float(t)
        if (times and t <= times[-1]) or t < 0 or t > horizon:
            continue
        tau = min(float(n0), tau_anchor + delta * (t - t_anchor))
        if tau < 1.0 or M < 2:
            continue
        others = [m for m in range(1, M + 1) if m != current]
        target = int(others[rng.integers(len(others))])
        times.append(t)
        targets.append(target)
        current = target
        tau_anchor = tau - 1.0
        t_anchor = t
    return SwitchSchedule(times=np.asarray(times), targets=np.asarray(targets, dtype=int),
                          delta=delta, n0=n0)


def _uniform_ball(rng: np.random.Generator, dim: int, radius: float) -> np.ndarray:
    v = rng.standard_normal(dim)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.zeros(dim)
    r = radius * rng.uniform() ** (1.0 / dim)
    return (r / norm) * v


def disturbance_inflate(flow, z: np.ndarray, delta: float,
                        rng: np.random.Generator | int) -> np.ndarray:
    """One deterministic selection of the ball-inflated flow: evaluate at
    z + e1 and add e2 with e1, e2 drawn from the closed delta-ball."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.Generator(np.random.PCG64(rng))
    dim = z.shape[-1]
    e1 = _uniform_ball(rng, dim, delta)
    e2 = _uniform_ball(rng, dim, delta)
    return flow(z + e1) + e2


@dataclass
class BatchResult:
    """Recorded samples of a batch run plus online diagnostics.

    sigma/tau at a recorded boundary are the values on arrival, i.e.
    before any jump scheduled at that same boundary.
    """

    t: np.ndarray        # (R,)
    indices: np.ndarray  # (R,) step indices of the records
    z: np.ndarray        # (B, R, 2n)
    sigma: np.ndarray    # (B, R)
    tau: np.ndarray      # (B, R)
    jumps: list          # per run: list of (step index, target, tau on arrival)
    diag: dict


def simulate_batch(problem: SwitchedProblem, dyn: DynamicsSpec,
                   z0: np.ndarray, sigma0: np.ndarray, tau0: np.ndarray,
                   events: list | None, variant: str,
                   horizon: float, step: float,
                   noise_seeds: np.ndarray | None = None,
                   record_every: int = 1,
                   track_lyapunov: bool = False,
                   disturbance: float | None = None,
                   tau_rate: float | None = None) -> BatchResult:
    """Advance a batch of automaton states over [0, horizon].

    events holds, per run, a time-sorted list of (step index, target
    mode); snapping to the grid is the caller's job. In the ideal
    variant the timer is frozen, so a run can jump at most floor(tau0)
    times; in the perturbed variant the timer is replenished at the
    maximal admissible rate problem.delta (or the constant tau_rate in
    [0, problem.delta] when given) and the flow of each run is inflated
    with seeded ball noise, redrawn once per step. The noise radius
    defaults to problem.delta; pass disturbance=0.0 for persistent
    switching with clean flows.
    """
    if variant not in ("ideal", "perturbed"):
        raise ValueError(f"variant must be 'ideal' or 'perturbed', got {variant!r}")
    n = problem.n
    B = z0.shape[0]
    if z0.shape != (B, 2 * n):
        raise ValueError(f"z0 must have shape (B, {2*n})")
    nsteps = int(round(horizon / step))
    if abs(nsteps * step - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError(f"horizon {horizon} is not a multiple of step {step}")

    delta = problem.delta if variant == "perturbed" else 0.0
    if tau_rate is not None and variant == "perturbed":
        if not 0.0 <= tau_rate <= problem.delta:
            raise ValueError(f"tau_rate must lie in [0, {problem.delta}], got {tau_rate}")
        delta = float(tau_rate)
    n0 = float(problem.n0)
    radius = problem.delta if disturbance is None else float(disturbance)
    perturbing = variant == "perturbed" and radius > 0.0
    spec = dyn
    if perturbing and dyn.refine_events:
        spec = dataclasses.replace(dyn, refine_events=False)

    curv_modes = problem.family.curvature_matrix()
    lin_modes = problem.family.linear_matrix()
    base_rhs = make_rhs(spec, problem.lap.L)

    events_at: dict[int, list[tuple[int, int]]] = {}
    if events is not None:
        if len(events) != B:
            raise ValueError("need one event list per run")
        for b, evs in enumerate(events):
            last = -1
            for k_idx, target in evs:
                if not 0 <= k_idx <= nsteps:
                    continue
                if k_idx <= last:
                    raise ScheduleError(
                        f"run {b}: switch requests collide on the step grid at index {k_idx}")
                last = k_idx
                events_at.setdefault(k_idx, []).append((b, int(target)))

    rngs = None
    noise = None
    if perturbing:
        if noise_seeds is None:
            raise ValueError("perturbed runs need noise seeds")
        rngs = [np.random.Generator(np.random.PCG64(int(s))) for s in noise_seeds]
        noise = np.zeros((2, B, 2 * n))

        def rhs(z, curv, lin, **kw):
            return base_rhs(z + noise[0], curv, lin, **kw) + noise[1]
    else:
        rhs = base_rhs

    z = np.array(z0, dtype=float, copy=True)
    sigma = np.array(sigma0, dtype=int, copy=True)
    if np.any((sigma < 1) | (sigma > problem.M)):
        raise ValueError("mode indices must lie in 1..M")
    tau_anchor = np.array(tau0, dtype=float, copy=True)
    if np.any((tau_anchor < 0) | (tau_anchor > n0)):
        raise ValueError(f"tau must lie in [0, {problem.n0}]")
    t_anchor = np.zeros(B)

    kappa_state = None
    if spec.kind == "hihbm" and spec.hysteresis > 0.0:
        s0 = switching_product(z, curv_modes[sigma - 1], lin_modes[sigma - 1], problem.lap.L)
        kappa_state = np.asarray(
            select_kappa(s0, spec.bounds.lo, spec.bounds.hi, spec.tie), dtype=float)

    rec_idx = list(range(0, nsteps + 1, record_every))
    if rec_idx[-1] != nsteps:
        rec_idx.append(nsteps)
    R = len(rec_idx)
    rec_z = np.empty((B, R, 2 * n))
    rec_sigma = np.empty((B, R), dtype=int)
    rec_tau = np.empty((B, R))
    jumps: list[list[tuple[int, int, float]]] = [[] for _ in range(B)]

    phi_star = None
    Ldag = problem.lap.Ldag
    if track_lyapunov:
        phi_star = np.array([problem.family.phi_star(s) for s in range(1, problem.M + 1)])
    v_prev = None
    max_v_increase = np.full(B, -np.inf)

    def v_of(zz, sig):
        cq = curv_modes[sig - 1]
        lq = lin_modes[sig - 1]
        q = zz[:, :n]
        p = zz[:, n:]
        phi = 0.5 * np.sum(cq * q * q, axis=-1) + np.sum(lq * q, axis=-1)
        return phi - phi_star[sig - 1] + 0.5 * np.sum((p @ Ldag) * p, axis=-1)

    max_budget = 0.0
    max_momentum = 0.0
    sup_norm = np.zeros(B)

    pos = 0
    for k in range(nsteps + 1):
        t_k = k * step
        tau_now = np.minimum(n0, tau_anchor + delta * (t_k - t_anchor))

        if track_lyapunov and k > 0:
            v_now = v_of(z, sigma)
            np.maximum(max_v_increase, v_now - v_prev, out=max_v_increase)

        if pos < R and k == rec_idx[pos]:
            rec_z[:, pos] = z
            rec_sigma[:, pos] = sigma
            rec_tau[:, pos] = tau_now
            pos += 1

        jumped_rows = []
        for b, target in events_at.get(k, ()):
            tau_b = float(tau_now[b])
            if tau_b < 1.0 - ADT_TOL:
                raise ScheduleError(
                    f"jump not enabled: run {b}, switch request at t={t_k:g} "
                    f"(step {k}) has tau={tau_b:.6f} < 1")
            if target == sigma[b]:
                raise ScheduleError(
                    f"run {b}: switch request at t={t_k:g} targets the active mode {target}")
            if not 1 <= target <= problem.M:
                raise ScheduleError(f"run {b}: switch target {target} outside 1..{problem.M}")
            jumps[b].append((k, target, tau_b))
            sigma[b] = target
            tau_anchor[b] = tau_b - 1.0
            t_anchor[b] = t_k
            jumped_rows.append(b)

        if track_lyapunov:
            if k == 0 or jumped_rows:
                v_prev = v_of(z, sigma)
            else:
                v_prev = v_now

        max_budget = max(max_budget, float(np.abs(z[:, :n].sum(axis=-1) - problem.d).max()))
        max_momentum = max(max_momentum, float(np.abs(z[:, n:].sum(axis=-1)).max()))
        np.maximum(sup_norm, np.linalg.norm(z, axis=-1), out=sup_norm)

        if k == nsteps:
            break

        if perturbing:
            for b, gen in enumerate(rngs):
                noise[0, b] = _uniform_ball(gen, 2 * n, radius)
                noise[1, b] = _uniform_ball(gen, 2 * n, radius)

        curv = curv_modes[sigma - 1]
        lin = lin_modes[sigma - 1]
        z = advance_step(z, step, rhs, spec, curv, lin, problem.lap.L, kappa_state)
        z = project_stacked(z, problem.d, n)

    diag = {"max_budget_violation": max_budget,
            "max_momentum_violation": max_momentum,
            "sup_norm": sup_norm}
    if track_lyapunov:
        diag["max_v_increase"] = max_v_increase

    return BatchResult(t=np.asarray(rec_idx, dtype=float) * step,
                       indices=np.asarray(rec_idx, dtype=int),
                       z=rec_z, sigma=rec_sigma, tau=rec_tau,
                       jumps=jumps, diag=diag)


@dataclass(frozen=True)
class HybridArc:
    """One solution, sampled on the integration grid.

    Jump instants contribute two samples with equal time: the arrival
    state under the old mode and the same state under the new mode with
    the jump counter incremented.
    """

    t: np.ndarray        # (S,)
    j: np.ndarray        # (S,) jump counts
    sigma: np.ndarray    # (S,)
    tau: np.ndarray      # (S,)
    z: np.ndarray        # (S, 2n)
    diag: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.z.shape[1] // 2

    def point(self, i: int) -> HybridPoint:
        return HybridPoint(z=OptState.from_stacked(self.z[i]),
                           sigma=int(self.sigma[i]), tau=float(self.tau[i]))

    @property
    def samples(self):
        """Iterate (t, j, HybridPoint) triples."""
        for i in range(self.t.size):
            yield float(self.t[i]), int(self.j[i]), self.point(i)

    @property
    def domain(self) -> list[tuple[float, float]]:
        """Intervals [t_j, t_{j+1}] of the hybrid time domain, one per
        jump index."""
        intervals = []
        start = float(self.t[0])
        jumps_at = self.t[:-1][np.diff(self.j) > 0]
        for tj in jumps_at:
            intervals.append((start, float(tj)))
            start = float(tj)
        intervals.append((start, float(self.t[-1])))
        return intervals

    def switch_times(self) -> np.ndarray:
        return self.t[:-1][np.diff(self.j) > 0]

    def induced_schedule(self, delta: float, n0: int) -> SwitchSchedule:
        """Switching signal realized by this arc, for admissibility checks."""
        mask = np.diff(self.j) > 0
        return SwitchSchedule(times=self.t[:-1][mask],
                              targets=self.sigma[1:][mask],
                              delta=delta, n0=n0)


def simulate(problem: SwitchedProblem, x0: HybridPoint, sched: SwitchSchedule,
             variant: str, dyn: DynamicsSpec, horizon: float, step: float,
             noise_seed: int | None = None,
             track_lyapunov: bool = False,
             disturbance: float | None = None) -> HybridArc:
    """Run one execution of the automaton and return its sampled arc.

    Switch times are snapped to the nearest step boundary. A request
    arriving with less than one token of dwell budget, or targeting the
    active mode, raises ScheduleError naming the event.
    """
    if not 0 <= x0.tau <= problem.n0:
        raise ValueError(f"x0.tau={x0.tau} outside [0, {problem.n0}]")
    if not 1 <= x0.sigma <= problem.M:
        raise ValueError(f"x0.sigma={x0.sigma} outside 1..{problem.M}")
    z0 = x0.z.stacked()
    n = problem.n
    if abs(z0[:n].sum() - problem.d) > 1e-6 or abs(z0[n:].sum()) > 1e-6:
        raise ValueError("initial state violates the flow set: project it first")

    nsteps = int(round(horizon / step))
    evs = [(int(round(t / step)), int(tgt)) for t, tgt in sched.events
           if int(round(t / step)) <= nsteps]
    res = simulate_batch(problem, dyn,
                         z0[None, :], np.array([x0.sigma]), np.array([x0.tau]),
                         [evs], variant, horizon, step,
                         noise_seeds=None if noise_seed is None else np.array([noise_seed]),
                         record_every=1, track_lyapunov=track_lyapunov,
                         disturbance=disturbance)

    jump_at = {k: (target, tau_pre) for k, target, tau_pre in res.jumps[0]}
    S = nsteps + 1 + len(jump_at)
    t = np.empty(S)
    j = np.empty(S, dtype=int)
    sig = np.empty(S, dtype=int)
    tau = np.empty(S)
    z = np.empty((S, 2 * n))
    pos = 0
    jcount = 0
    for k in range(nsteps + 1):
        t[pos] = res.t[k]
        j[pos] = jcount
        sig[pos] = res.sigma[0, k]
        tau[pos] = res.tau[0, k]
        z[pos] = res.z[0, k]
        pos += 1
        if k in jump_at:
            target, tau_pre = jump_at[k]
            jcount += 1
            t[pos] = res.t[k]
            j[pos] = jcount
            sig[pos] = target
            tau[pos] = tau_pre - 1.0
            z[pos] = res.z[0, k]
            pos += 1
    return HybridArc(t=t, j=j, sigma=sig, tau=tau, z=z, diag=res.diag)


def arc_metrics(arc: HybridArc, problem: SwitchedProblem):
    """Per-sample energy, objective value and distance to the active
    mode's optimizer."""
    n = arc.n
    q = arc.z[:, :n]
    p = arc.z[:, n:]
    V = np.empty(arc.t.size)
    phi = np.empty(arc.t.size)
    dist = np.empty(arc.t.size)
    for s in range(1, problem.M + 1):
        mask = arc.sigma == s
        if not mask.any():
            continue
        obj = problem.family.mode(s)
        phi[mask] = obj.value(q[mask])
        V[mask] = lyapunov(q[mask], p[mask], obj, problem.lap, problem.family.phi_star(s))
        dist[mask] = np.linalg.norm(q[mask] - problem.family.kkt(s).q_star, axis=-1)
    return V, phi, dist


def arc_to_csv(arc: HybridArc, problem: SwitchedProblem, path, meta: dict | None = None):
    """Write an arc with columns t, j, sigma, tau, q_1..q_n, p_1..p_n,
    V, phi, dist_to_qstar_sigma. Metadata goes into a leading comment."""
    n = arc.n
    V, phi, dist = arc_metrics(arc, problem)
    table = np.column_stack([arc.t, arc.j, arc.sigma, arc.tau, arc.z, V, phi, dist])
    cols = (["t", "j", "sigma", "tau"]
            + [f"q_{i}" for i in range(1, n + 1)]
            + [f"p_{i}" for i in range(1, n + 1)]
            + ["V", "phi", "dist_to_qstar_sigma"])
    write_csv(path, table, cols, meta)


def write_csv(path, table: np.ndarray, columns: list[str], meta: dict | None = None):
    with open(path, "w", newline="") as fh:
        if meta:
            pairs = " ".join(f"{k}={v}" for k, v in meta.items())
            fh.write(f"# {pairs}\n")
        fh.write(",".join(columns) + "\n")
        np.savetxt(fh, np.atleast_2d(table), fmt="%.17g", delimiter=",")


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Read back a CSV written by write_csv: (meta, columns, table)."""
    meta = {}
    with open(path) as fh:
        line = fh.readline()
        if line.startswith("#"):
            for pair in line[1:].split():
                k, _, v = pair.partition("=")
                meta[k] = v
            line = fh.readline()
        columns = line.strip().split(",")
        table = np.loadtxt(fh, delimiter=",", ndmin=2)
    return meta, columns, table
