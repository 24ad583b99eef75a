"""Point-cloud approximation of the limit set of the ideal system and the
practical-stability experiment sweeping the dwell-rate parameter.

The limit set is sampled by exhausting (or seeding, past a combinatorial
cap) the ideal system's choices: start mode, jump instants drawn from a
grid, and target-mode sequences. Every trajectory sample from an
equilibrium start belongs to the reachable set that defines the limit
set, so whole arcs are collected, not just their tails.
"""

from __future__ import annotations

import dataclasses
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .dynamics import DynamicsSpec, OptState
from .hybrid import SwitchedProblem, generate_schedule, simulate_batch

# Caps on the exhaustive enumeration of (jump times x mode sequences).
EXHAUSTIVE_SEQ_LIMIT = 64     # on M**n0
EXHAUSTIVE_RUN_LIMIT = 4096
SAMPLED_ASSIGNMENTS = 256

_CHUNK = 32


@dataclass
class PointCloud:
    """Finite sample of the limit set, each point tagged with the mode
    that was active when it was recorded."""

    z: np.ndarray          # (N, 2n)
    sigma: np.ndarray      # (N,)
    metadata: dict = field(default_factory=dict)
    _tree: cKDTree | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return self.z.shape[0]

    @property
    def n(self) -> int:
        return self.z.shape[1] // 2

    def tree(self) -> cKDTree:
        if self._tree is None:
            self._tree = cKDTree(self.z)
        return self._tree

    def diameter(self) -> float:
        """Bounding-box diagonal, an upper proxy for the true diameter."""
        if len(self) == 0:
            return 0.0
        return float(np.linalg.norm(self.z.max(axis=0) - self.z.min(axis=0)))


def distance_to_cloud(x, cloud: PointCloud):
    """Minimum Euclidean distance from x to the cloud, ignoring mode tags.

    x may be an OptState, one stacked state or a batch of them.
    """
    if len(cloud) == 0:
        raise ValueError("cloud is empty")
    if isinstance(x, OptState):
        x = x.stacked()
    x = np.asarray(x, dtype=float)
    dist, _ = cloud.tree().query(x)
    if x.ndim == 1:
        return float(dist)
    return dist


def _mode_sequences(start: int, length: int, M: int):
    """All target sequences of the given length with consecutive-distinct
    entries, starting from (but excluding) the start mode."""
    if length == 0:
        yield ()
        return
    others = [m for m in range(1, M + 1) if m != start]
    for first in others:
        for rest in _mode_sequences(first, length - 1, M):
            yield (first,) + rest


def _enumerate_assignments(M: int, n0: int, grid: np.ndarray, seed: int):
    """(start mode, jump times, targets) triples covering the ideal
    system's nondeterminism; exhaustive below the caps, seeded samples
    beyond them."""
    total = 0
    for k in range(n0 + 1):
        total += M * len(list(itertools.combinations(range(len(grid)), k))) * max(1, (M - 1) ** k)
    exhaustive = (M ** n0 <= EXHAUSTIVE_SEQ_LIMIT) and (total <= EXHAUSTIVE_RUN_LIMIT)

    if exhaustive:
        out = []
        for sigma0 in range(1, M + 1):
            for k in range(n0 + 1):
                for jt in itertools.combinations(grid, k):
                    for seq in _mode_sequences(sigma0, k, M):
                        out.append((sigma0, jt, seq))
        return out

    rng = np.random.Generator(np.random.PCG64(seed))
    out = []
    for _ in range(SAMPLED_ASSIGNMENTS):
        sigma0 = int(rng.integers(1, M + 1))
        k = int(rng.integers(0, n0 + 1))
        if k and M < 2:
            k = 0
        jt = tuple(sorted(rng.choice(grid, size=k, replace=False))) if k else ()
        seq = []
        cur = sigma0
        for _ in range(k):
            others = [m for m in range(1, M + 1) if m != cur]
            cur = int(others[rng.integers(len(others))])
            seq.append(cur)
        out.append((sigma0, jt, tuple(seq)))
    return out


def _thin(z: np.ndarray, sigma: np.ndarray, resolution: float):
    """Keep one sample per (mode, spatial grid cell)."""
    if resolution <= 0 or z.shape[0] == 0:
        return z, sigma
    cells = np.floor(z / resolution).astype(np.int64)
    keyed = np.column_stack([sigma.astype(np.int64), cells])
    _, idx = np.unique(keyed, axis=0, return_index=True)
    idx.sort()
    return z[idx], sigma[idx]


def sample_omega(problem: SwitchedProblem, dyn: DynamicsSpec,
                 jump_grid, horizon: float, step: float,
                 n0: int | None = None,
                 tail_fraction: float = 0.2,
                 jitter_radius: float = 1e-4, jitter_count: int = 8,
                 jitter_seed: int = 0, enum_seed: int = 0,
                 thin_resolution: float | None = None) -> PointCloud:
    """Sample the limit set of the ideal system as a point cloud.

    For every start mode, the run starts at that mode's rest point with a
    full jump budget of n0; jump instants are chosen from jump_grid and
    target modes enumerated. All trajectory samples are collected, plus
    jittered starts (projected onto the flow set) probing the closure.
    thin_resolution=None picks a grid at 2e-3 times the equilibria
    spread; pass 0 to disable thinning.
    """
    n0 = problem.n0 if n0 is None else n0
    if n0 < 1:
        raise ValueError("n0 must be >= 1")
    n = problem.n
    grid = np.asarray(sorted(jump_grid), dtype=float)
    grid = grid[(grid >= 0) & (grid <= horizon)]
    nsteps = int(round(horizon / step))

    equilibria = {s: problem.equilibrium(s) for s in range(1, problem.M + 1)}
    if thin_resolution is None:
        eqs = np.stack(list(equilibria.values()))
        spread = max(float(np.linalg.norm(eqs.max(axis=0) - eqs.min(axis=0))), 1.0)
        thin_resolution = 2e-3 * spread

    assignments = _enumerate_assignments(problem.M, n0, grid, enum_seed)

    jrng = np.random.Generator(np.random.PCG64(jitter_seed))
    jitters = {}
    for s in range(1, problem.M + 1):
        offs = jrng.standard_normal((jitter_count, 2 * n))
        norms = np.linalg.norm(offs, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        radii = jitter_radius * jrng.uniform(size=(jitter_count, 1)) ** (1.0 / (2 * n))
        offs = offs / norms * radii
        # keep jittered starts on the flow set
        offs[:, :n] -= offs[:, :n].mean(axis=1, keepdims=True)
        offs[:, n:] -= offs[:, n:].mean(axis=1, keepdims=True)
        jitters[s] = offs

    # jump enumeration uses exact equilibrium starts; jittered starts
    # probe the closure around each equilibrium without re-enumeration
    runs = []
    for sigma0, jt, seq in assignments:
        events = [(int(round(t / step)), tgt) for t, tgt in zip(jt, seq)]
        runs.append((equilibria[sigma0], sigma0, events))
    for sigma0 in range(1, problem.M + 1):
        for off in jitters[sigma0]:
            runs.append((equilibria[sigma0] + off, sigma0, []))

    ideal = dataclasses.replace(problem, delta=0.0)
    z_parts = [np.stack(list(equilibria.values()))]
    s_parts = [np.arange(1, problem.M + 1)]
    sup_norm = 0.0
    for lo in range(0, len(runs), _CHUNK):
        chunk = runs[lo:lo + _CHUNK]
        z0 = np.stack([c[0] for c in chunk])
        sigma0 = np.array([c[1] for c in chunk])
        events = [c[2] for c in chunk]
        res = simulate_batch(ideal, dyn, z0, sigma0,
                             np.full(len(chunk), float(n0)), events,
                             "ideal", horizon, step, record_every=1)
        zc = res.z.reshape(-1, 2 * n)
        sc = res.sigma.reshape(-1)
        zc, sc = _thin(zc, sc, thin_resolution)
        z_parts.append(zc)
        s_parts.append(sc)
        sup_norm = max(sup_norm, float(res.diag["sup_norm"].max()))

    z_all = np.concatenate(z_parts)
    s_all = np.concatenate(s_parts)
    z_all, s_all = _thin(z_all, s_all, thin_resolution)

    metadata = {
        "M": problem.M, "n": n, "n0": n0, "d": problem.d,
        "horizon": horizon, "step": step, "jump_grid": grid.tolist(),
        "tail_fraction": tail_fraction,
        "jitter_radius": jitter_radius, "jitter_count": jitter_count,
        "thin_resolution": thin_resolution,
        "runs": len(runs), "sup_norm": sup_norm,
        "dynamics": dyn.kind,
    }
    return PointCloud(z=z_all, sigma=s_all, metadata=metadata)


def feasible_initial_state(problem: SwitchedProblem, sigma0: int,
                           rng: np.random.Generator,
                           q_scale: float, p_scale: float) -> np.ndarray:
    """Random stacked state on the flow set, offset from the start mode's
    rest point."""
    n = problem.n
    dq = rng.standard_normal(n) * q_scale
    dp = rng.standard_normal(n) * p_scale
    q = problem.family.kkt(sigma0).q_star + dq
    q -= (q.sum() - problem.d) / n
    dp -= dp.mean()
    return np.concatenate([q, dp])


def practical_stability_sweep(problem: SwitchedProblem, dyn: DynamicsSpec,
                              cloud: PointCloud, deltas, seeds_per_delta: int,
                              horizon: float, step: float,
                              tail_fraction: float = 0.2,
                              schedule_seed: int = 1000,
                              noise_seed: int = 5000,
                              ic_seed: int = 9000,
                              ic_q_scale: float = 5.0, ic_p_scale: float = 2.0,
                              record_every: int = 2) -> list[dict]:
    """Tail distance to the cloud for perturbed runs, per dwell rate.

    For each delta, seeds_per_delta admissible schedules, disturbance
    streams and feasible initial conditions are drawn; the reported
    figure is the per-delta maximum over runs of the supremum of the
    cloud distance over the final tail_fraction of the horizon.
    """
    rows = []
    B = seeds_per_delta
    for delta in deltas:
        prob_d = dataclasses.replace(problem, delta=float(delta))
        z0 = np.empty((B, 2 * problem.n))
        sigma0 = np.empty(B, dtype=int)
        events = []
        for b in range(B):
            sigma0[b] = 1 + (b % problem.M)
            rng = np.random.Generator(np.random.PCG64(ic_seed + b))
            z0[b] = feasible_initial_state(problem, int(sigma0[b]), rng,
                                           ic_q_scale, ic_p_scale)
            sched = generate_schedule(schedule_seed + b, float(delta), problem.n0,
                                      horizon, problem.M,
                                      initial_mode=int(sigma0[b]), grid=step)
            events.append([(int(round(t / step)), tgt) for t, tgt in sched.events])
        res = simulate_batch(prob_d, dyn, z0, sigma0,
                             np.full(B, float(problem.n0)), events,
                             "perturbed", horizon, step,
                             noise_seeds=noise_seed + np.arange(B),
                             record_every=record_every)
        tail = res.t >= (1.0 - tail_fraction) * horizon
        zt = res.z[:, tail, :]
        dist = distance_to_cloud(zt.reshape(-1, zt.shape[-1]), cloud)
        per_run = dist.reshape(B, -1).max(axis=1)
        rows.append({"delta": float(delta), "seeds": B,
                     "tail_distance": float(per_run.max())})
    return rows


def cloud_to_csv(cloud: PointCloud, path, meta: dict | None = None):
    from .hybrid import write_csv
    n = cloud.n
    cols = ["sigma"] + [f"q_{i}" for i in range(1, n + 1)] + [f"p_{i}" for i in range(1, n + 1)]
    table = np.column_stack([cloud.sigma, cloud.z])
    write_csv(path, table, cols, meta)


def sweep_to_csv(rows: list[dict], path, meta: dict | None = None):
    from .hybrid import write_csv
    table = np.array([[r["delta"], r["seeds"], r["tail_distance"]] for r in rows])
    write_csv(path, table, ["delta", "seeds", "tail_distance"], meta)
