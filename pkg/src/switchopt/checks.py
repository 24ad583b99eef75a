"""Seeded property checks over every module, runnable as a release gate.

Each check returns a CheckResult; run_checks executes the whole battery.
The fast profile keeps the gate under ~30 s, the full profile matches the
acceptance-suite workloads.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DampingBounds, DynamicsSpec, OptState, integrate_flow
from .graph import LaplacianPair, build_laplacian, identity_residuals
from .hybrid import (ADT_TOL, ScheduleError, SwitchSchedule, SwitchedProblem,
                     HybridPoint, generate_schedule, simulate, simulate_batch,
                     validate_schedule)
from .objectives import QuadraticObjective, kkt_residuals, sample_family

BOUNDS = DampingBounds(0.01, 35.5)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def check_laplacian_identities(pair: LaplacianPair | None = None,
                               sizes=(2, 3, 10, 50)) -> CheckResult:
    worst_null = worst_proj = 0.0
    pairs = ([pair] if pair is not None else
             [build_laplacian(topo, n) for topo in ("path", "complete") for n in sizes])
    for p in pairs:
        null_res, proj_res = identity_residuals(p)
        worst_null = max(worst_null, null_res)
        worst_proj = max(worst_proj, proj_res)
    ok = worst_null <= 1e-10 and worst_proj <= 1e-8
    return CheckResult("laplacian_identities", ok,
                       f"|Ldag 1|<={worst_null:.2e}, |L Ldag - proj|<={worst_proj:.2e}")


def check_kkt_oracle(seed: int = 0, count: int = 100, n: int = 20) -> CheckResult:
    rng = np.random.default_rng(seed)
    lap = build_laplacian("path", n)
    worst_stat = worst_feas = worst_lap = 0.0
    for _ in range(count):
        obj = QuadraticObjective(curvature=rng.uniform(10, 20, n),
                                 linear=rng.uniform(-10, 10, n))
        d = float(rng.uniform(10, 200))
        from .objectives import kkt_solve
        sol = kkt_solve(obj, d)
        stat, feas = kkt_residuals(obj, d, sol)
        worst_stat = max(worst_stat, stat)
        worst_feas = max(worst_feas, feas)
        worst_lap = max(worst_lap, float(np.linalg.norm(lap.L @ obj.gradient(sol.q_star))))
    ok = worst_stat <= 1e-9 and worst_feas <= 1e-9 and worst_lap <= 1e-8
    return CheckResult("kkt_oracle", ok,
                       f"{count} instances: stationarity<={worst_stat:.2e}, "
                       f"budget<={worst_feas:.2e}, |L grad|<={worst_lap:.2e}")


def _spread_states(problem: SwitchedProblem, runs: int, seed: int,
                   max_offset: float = 1e3) -> np.ndarray:
    rng = np.random.default_rng(seed)
    n = problem.n
    qs = problem.family.kkt(1).q_star
    z0 = np.empty((runs, 2 * n))
    for b in range(runs):
        scale = 10 ** rng.uniform(0, np.log10(max_offset))
        v = rng.standard_normal(2 * n)
        v[:n] -= v[:n].mean()
        v[n:] -= v[n:].mean()
        v *= scale / max(np.linalg.norm(v), 1e-300)
        z0[b] = np.concatenate([qs, np.zeros(n)]) + v
        z0[b, :n] -= (z0[b, :n].sum() - problem.d) / n
        z0[b, n:] -= z0[b, n:].mean()
    return z0


def check_conservation(seed: int = 0, runs: int = 50, horizon: float = 50.0,
                       step: float = 1e-3, n: int = 20) -> CheckResult:
    """Budget and momentum sums stay put along every integrated flow."""
    problem = SwitchedProblem(lap=build_laplacian("path", n),
                              family=sample_family(seed + 1, n, 1, 100.0),
                              delta=0.0, n0=1)
    groups = [DynamicsSpec(kind="hihbm", bounds=BOUNDS),
              DynamicsSpec(kind="hbm", gain=5.0),
              DynamicsSpec(kind="gradient")]
    per = [runs - 2 * (runs // 3), runs // 3, runs // 3]
    worst_q = worst_p = 0.0
    for spec, cnt in zip(groups, per):
        if cnt == 0:
            continue
        z0 = _spread_states(problem, cnt, seed, max_offset=100.0)
        res = simulate_batch(problem, spec, z0, np.ones(cnt, dtype=int),
                             np.ones(cnt), None, "ideal", horizon, step,
                             record_every=10_000)
        worst_q = max(worst_q, res.diag["max_budget_violation"])
        worst_p = max(worst_p, res.diag["max_momentum_violation"])
    ok = worst_q <= 1e-6 and worst_p <= 1e-6
    return CheckResult("conservation", ok,
                       f"{runs} runs, horizon {horizon:g}: |1q-d|<={worst_q:.2e}, "
                       f"|1p|<={worst_p:.2e}")


def check_gas_and_lyapunov(seed: int = 0, runs: int = 20, horizon: float = 50.0,
                           step: float = 1e-3, n: int = 20,
                           dist_tol: float = 1e-3, v_slack: float = 1e-8) -> CheckResult:
    """Global attraction of the rest point and per-step energy decrease."""
    problem = SwitchedProblem(lap=build_laplacian("path", n),
                              family=sample_family(seed + 2, n, 1, 100.0),
                              delta=0.0, n0=1)
    spec = DynamicsSpec(kind="hihbm", bounds=BOUNDS)
    z0 = _spread_states(problem, runs, seed + 3)
    res = simulate_batch(problem, spec, z0, np.ones(runs, dtype=int),
                         np.ones(runs), None, "ideal", horizon, step,
                         record_every=int(round(horizon / step)),
                         track_lyapunov=True)
    qs = problem.family.kkt(1).q_star
    final_dist = float(np.linalg.norm(res.z[:, -1, :n] - qs, axis=-1).max())
    v_inc = float(res.diag["max_v_increase"].max())
    ok = final_dist <= dist_tol and v_inc <= v_slack
    return CheckResult("gas_and_lyapunov", ok,
                       f"{runs} starts: final dist<={final_dist:.2e}, "
                       f"per-step V increase<={v_inc:.2e}")


def check_backward_uniqueness(seed: int = 0, modes: int = 10, horizon: float = 10.0,
                              step: float = 2e-3, n: int = 12) -> CheckResult:
    """The reversed-time flow keeps each rest point fixed.

    Equilibria are placed at power-of-two coordinates so the stationarity
    seed is exact in floats; the anti-damped reversed flow amplifies any
    nonzero seed exponentially, which would swamp the tolerance.
    """
    lap = build_laplacian("path", n)
    rng = np.random.default_rng(seed + 4)
    spec = DynamicsSpec(kind="hihbm", bounds=BOUNDS)
    worst = 0.0
    for _ in range(modes):
        curv = rng.uniform(10, 20, n)
        qbar = rng.choice([0.5, 1.0, 2.0, 4.0, 8.0], size=n)
        obj = QuadraticObjective(curvature=curv, linear=-(curv * qbar))
        t, Z = integrate_flow(spec, obj, lap, OptState(q=qbar, p=np.zeros(n)),
                              float(qbar.sum()), horizon, step,
                              backward=True, record_every=100)
        worst = max(worst, float(np.linalg.norm(Z - Z[0], axis=-1).max()))
    ok = worst <= 1e-6
    return CheckResult("backward_uniqueness", ok,
                       f"{modes} modes over [0,{horizon:g}]: max drift {worst:.2e}")


def _adversarial_schedule(rng: np.random.Generator, delta: float, n0: int) -> SwitchSchedule:
    """A burst of switches too dense for the dwell bound."""
    count = n0 + 1 + int(rng.integers(1, 4))
    start = float(rng.uniform(0, 20))
    width = (count - n0 - 0.5) / delta if delta > 0 else 1.0
    width *= float(rng.uniform(0.2, 0.9))
    times = np.sort(rng.uniform(start, start + width, count))
    times = np.maximum.accumulate(times + np.arange(count) * 1e-9)
    targets = [2 if k % 2 == 0 else 1 for k in range(count)]
    return SwitchSchedule(times=times, targets=np.asarray(targets), delta=delta, n0=n0)


def _token_feasible(sched: SwitchSchedule, tau0: float) -> bool:
    tau_anchor, t_anchor = float(tau0), 0.0
    for t in sched.times:
        tau = min(float(sched.n0), tau_anchor + sched.delta * (t - t_anchor))
        if tau < 1.0 - ADT_TOL:
            return False
        tau_anchor, t_anchor = tau - 1.0, float(t)
    return True


def check_dwell_correspondence(seed: int = 0, count: int = 1000,
                               sim_spot_checks: int = 40) -> CheckResult:
    """Generated schedules validate; dense bursts are rejected; the
    simulator's jump gate agrees with the dwell bound."""
    rng = np.random.default_rng(seed + 5)
    delta, n0 = 0.06, 1
    generated_ok = adversarial_rejected = token_agree = 0
    scheds = []
    for k in range(count):
        s = generate_schedule(seed * 100_000 + k, delta, n0, 100.0, 2, grid=1e-3)
        ok, _ = validate_schedule(s)
        generated_ok += ok
        if _token_feasible(s, n0) == ok:
            token_agree += 1
        scheds.append(s)
    for k in range(count):
        s = _adversarial_schedule(rng, delta, n0)
        ok, _ = validate_schedule(s)
        adversarial_rejected += not ok
        if _token_feasible(s, n0) == ok:
            token_agree += 1

    problem = SwitchedProblem(lap=build_laplacian("path", 2),
                              family=sample_family(seed + 6, 2, 2, 100.0),
                              delta=delta, n0=n0)
    spec = DynamicsSpec(kind="hihbm", bounds=BOUNDS)
    x0 = HybridPoint(z=OptState.from_stacked(problem.equilibrium(1)),
                     sigma=1, tau=float(n0))
    sim_step = 0.05
    sim_agree = 0
    for k in range(sim_spot_checks // 2):
        # schedules built on the simulation grid so gate and validator see
        # the same switch times
        s = generate_schedule(seed * 100_000 + k, delta, n0, 100.0, 2, grid=sim_step)
        try:
            simulate(problem, x0, s, "perturbed", spec, 100.0, sim_step,
                     disturbance=0.0)
            accepted = True
        except ScheduleError:
            accepted = False
        sim_agree += accepted == validate_schedule(s)[0]
    rng2 = np.random.default_rng(seed + 7)
    for _ in range(sim_spot_checks // 2):
        s = _adversarial_schedule(rng2, delta, n0)
        if s.times.max() >= 100.0:
            sim_agree += 1
            continue
        try:
            simulate(problem, x0, s, "perturbed", spec, 100.0, sim_step,
                     disturbance=0.0)
            accepted = True
        except ScheduleError:
            accepted = False
        sim_agree += accepted == validate_schedule(s)[0]

    ok = (generated_ok == count and adversarial_rejected == count
          and token_agree == 2 * count and sim_agree == 2 * (sim_spot_checks // 2))
    return CheckResult("dwell_correspondence", ok,
                       f"{generated_ok}/{count} generated valid, "
                       f"{adversarial_rejected}/{count} bursts rejected, "
                       f"token agreement {token_agree}/{2*count}, "
                       f"simulator agreement {sim_agree}/{2*(sim_spot_checks//2)}")


def check_lagrange_stability(seed: int = 0, trials: int = 50, horizon: float = 40.0,
                             step: float = 2e-3) -> CheckResult:
    """Ideal switched runs stay norm-bounded by a fixed function of the
    start: sup|x| <= 10 (max equilibrium norm + |x0|)."""
    problem = SwitchedProblem(lap=build_laplacian("path", 4),
                              family=sample_family(seed + 8, 4, 2, 40.0),
                              delta=0.05, n0=2)
    spec = DynamicsSpec(kind="hihbm", bounds=BOUNDS)
    eq_norm = max(float(np.linalg.norm(problem.equilibrium(s)))
                  for s in range(1, problem.M + 1))
    z0 = _spread_states(problem, trials, seed + 9, max_offset=300.0)
    events = []
    for b in range(trials):
        sched = generate_schedule(seed + 10 + b, problem.delta, problem.n0,
                                  horizon, problem.M, grid=step)
        events.append([(int(round(t / step)), tgt) for t, tgt in sched.events])
    res = simulate_batch(problem, spec, z0, np.ones(trials, dtype=int),
                         np.full(trials, float(problem.n0)), events,
                         "perturbed", horizon, step, record_every=5_000,
                         disturbance=0.0)
    x0_norm = np.linalg.norm(z0, axis=-1)
    bound = 10.0 * (eq_norm + x0_norm)
    margin = float((res.diag["sup_norm"] / bound).max())
    ok = margin <= 1.0
    return CheckResult("lagrange_stability", ok,
                       f"{trials} switched runs: sup|x| at {100*margin:.1f}% of bound")


def run_checks(seed: int = 0, fast: bool = True) -> list[CheckResult]:
    if fast:
        return [
            check_laplacian_identities(),
            check_kkt_oracle(seed, count=30),
            check_conservation(seed, runs=9, horizon=5.0),
            check_gas_and_lyapunov(seed, runs=6, horizon=40.0),
            check_backward_uniqueness(seed, modes=4),
            check_dwell_correspondence(seed, count=200, sim_spot_checks=10),
            check_lagrange_stability(seed, trials=10),
        ]
    return [
        check_laplacian_identities(),
        check_kkt_oracle(seed, count=100),
        check_conservation(seed, runs=50, horizon=50.0),
        check_gas_and_lyapunov(seed, runs=20, horizon=50.0),
        check_backward_uniqueness(seed, modes=10),
        check_dwell_correspondence(seed, count=1000),
        check_lagrange_stability(seed, trials=50),
    ]
