"""Command-line front end: scenario-driven experiment runners.

Subcommands map one-to-one onto the shipped experiments: the two-node
relay steady-state study (figure1), objective traces under persistent
switching (figure2), the four-method comparison (figure3), the limit-set
sampler with the dwell-rate sweep (omega), schedule validation and the
property-check gate. Exit codes: 0 success, 1 check/validation failure,
2 scenario error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checks import run_checks
from .dynamics import integrate_flow
from .hybrid import (ScheduleError, SwitchSchedule, arc_metrics, arc_to_csv,
                     generate_schedule, simulate, write_csv)
from .omega import (cloud_to_csv, distance_to_cloud, practical_stability_sweep,
                    sample_omega, sweep_to_csv)
from .scenario import Scenario, ScenarioError, load_scenario, scenario_from_dict

# segments at least this long count as "long" in figure-2 summaries
LONG_SEGMENT = 12.0
# convergence threshold reported in figure-3 summaries
ERROR_THRESHOLD = 1e-2


def _write_summary(out_dir: Path, name: str, pairs: dict):
    lines = [f"{k} = {v}" for k, v in pairs.items()]
    (out_dir / name).write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)


def _build_cloud(scn: Scenario, problem, spec):
    grid = np.linspace(0.0, scn.jump_grid_max, scn.jump_grid_count)
    return sample_omega(problem, spec, grid, scn.cloud_horizon,
                        scn.fields.get("cloud_step") or scn.step,
                        tail_fraction=scn.tail_fraction,
                        jitter_radius=scn.jitter_radius,
                        jitter_count=scn.jitter_count)


def run_figure1(scn: Scenario, out_dir: Path) -> dict:
    """Limit-set cloud of the ideal system plus one perturbed arc.

    The arc CSV has one row per grid point including t=0 plus one
    duplicate row per jump.
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = scn.problem()
    spec = scn.dynamics_spec()
    meta = scn.meta()

    cloud = _build_cloud(scn, problem, spec)
    cloud_to_csv(cloud, out_dir / "cloud.csv", meta)

    x0 = scn.initial_state(problem)
    sched = generate_schedule(scn.schedule_seed, problem.delta, problem.n0,
                              scn.horizon, problem.M,
                              initial_mode=x0.sigma, grid=scn.step)
    arc = simulate(problem, x0, sched, "perturbed", spec, scn.horizon, scn.step,
                   noise_seed=scn.noise_seed)
    arc_to_csv(arc, problem, out_dir / "arc.csv", meta)

    tail = arc.t >= (1.0 - scn.tail_fraction) * scn.horizon
    tail_dist = float(distance_to_cloud(arc.z[tail], cloud).max())
    diameter = cloud.diameter()
    summary = {
        "cloud_points": len(cloud),
        "cloud_diameter": f"{diameter:.6g}",
        "switches": int(arc.j.max()),
        "tail_distance": f"{tail_dist:.6g}",
        "tail_distance_over_diameter": f"{tail_dist / diameter:.6g}",
    }
    _write_summary(out_dir, "summary.txt", summary)
    return {"cloud": cloud, "arc": arc, "tail_distance": tail_dist,
            "diameter": diameter}


def run_omega(scn: Scenario, out_dir: Path) -> dict:
    """Limit-set cloud plus the dwell-rate sweep of tail distances."""
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = scn.problem()
    spec = scn.dynamics_spec()
    meta = scn.meta()

    cloud = _build_cloud(scn, problem, spec)
    cloud_to_csv(cloud, out_dir / "cloud.csv", meta)

    rows = practical_stability_sweep(problem, spec, cloud, scn.sweep_deltas,
                                     scn.sweep_seeds, scn.sweep_horizon, scn.step,
                                     tail_fraction=scn.tail_fraction,
                                     schedule_seed=scn.schedule_seed,
                                     noise_seed=scn.noise_seed,
                                     ic_seed=scn.ic_seed)
    sweep_to_csv(rows, out_dir / "sweep.csv", meta)
    summary = {"cloud_points": len(cloud), "cloud_diameter": f"{cloud.diameter():.6g}"}
    for r in rows:
        summary[f"tail_distance_delta_{r['delta']:g}"] = f"{r['tail_distance']:.6g}"
    _write_summary(out_dir, "summary.txt", summary)
    return {"cloud": cloud, "sweep": rows}


def segment_report(arc, problem, sched: SwitchSchedule, horizon: float) -> list[dict]:
    """Suboptimality against the active mode's optimum, per inter-switch
    segment."""
    _, phi, _ = arc_metrics(arc, problem)
    phi_star = np.array([problem.family.phi_star(int(s)) for s in arc.sigma])
    subopt = phi - phi_star
    bounds = np.concatenate([[0.0], sched.times, [horizon]])
    rows = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        if b - a <= 0:
            continue
        mask = (arc.t >= a) & (arc.t < b)
        if not mask.any():
            continue
        rows.append({"start": float(a), "end": float(b), "length": float(b - a),
                     "mode": int(arc.sigma[mask][-1]),
                     "end_suboptimality": float(subopt[mask][-1])})
    return rows


def run_figure2(scn: Scenario, out_dir: Path, variant: str = "persistent") -> dict:
    """Objective trace under switching; delta governs only the switching
    frequency here, flows are integrated without ball noise."""
    if variant not in ("persistent", "sparse"):
        raise ScenarioError(f"figure2 variant must be 'persistent' or 'sparse', got {variant!r}")
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = scn.problem()
    spec = scn.dynamics_spec()
    meta = dict(scn.meta(), variant=variant)

    delta = problem.delta if variant == "persistent" else scn.sparse_delta
    prob = dataclasses.replace(problem, delta=delta)
    x0 = scn.initial_state(prob)
    sched = generate_schedule(scn.schedule_seed, delta, prob.n0, scn.horizon,
                              prob.M, initial_mode=x0.sigma, grid=scn.step)
    arc = simulate(prob, x0, sched, "perturbed", spec, scn.horizon, scn.step,
                   disturbance=0.0)
    arc_to_csv(arc, prob, out_dir / f"arc_{variant}.csv", meta)

    rows = segment_report(arc, prob, sched, scn.horizon)
    summary = {"variant": variant, "switches": int(arc.j.max()),
               "switch_bound": f"{delta * scn.horizon + prob.n0:.6g}"}
    for i, r in enumerate(rows):
        summary[f"segment_{i}"] = (f"[{r['start']:.6g}, {r['end']:.6g}) mode {r['mode']} "
                                   f"end_suboptimality {r['end_suboptimality']:.6g}")
    _write_summary(out_dir, f"summary_{variant}.txt", summary)
    return {"arc": arc, "schedule": sched, "segments": rows}


def run_figure3(scn: Scenario, out_dir: Path) -> dict:
    """Four-method comparison from a shared start: plain descent, two
    fixed damping gains, and the sign-switched damping."""
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = scn.problem()
    meta = scn.meta()
    obj = problem.family.mode(1)
    sol = problem.family.kkt(1)
    phi_star = problem.family.phi_star(1)
    x0 = scn.initial_state(problem)

    methods = [("gradient", scn.dynamics_spec(kind="gradient"))]
    for gain in scn.hbm_gains:
        methods.append((f"hbm_k{gain:g}", scn.dynamics_spec(kind="hbm", gain=gain)))
    methods.append(("hihbm", scn.dynamics_spec(kind="hihbm")))

    traces = {}
    t_grid = None
    for name, spec in methods:
        t_grid, Z = integrate_flow(spec, obj, problem.lap, x0.z, problem.d,
                                   scn.horizon, scn.step)
        q = Z[:, :problem.n]
        traces[name] = (obj.value(q) - phi_star,
                        np.linalg.norm(q - sol.q_star, axis=-1))

    cols = ["t"] + [f"subopt_{m}" for m, _ in methods] + [f"dist_{m}" for m, _ in methods]
    table = np.column_stack([t_grid] + [traces[m][0] for m, _ in methods]
                            + [traces[m][1] for m, _ in methods])
    write_csv(out_dir / "errors.csv", table, cols, meta)

    summary = {}
    for name, _ in methods:
        sub, dist = traces[name]
        hit = np.nonzero(dist <= ERROR_THRESHOLD)[0]
        summary[f"final_suboptimality_{name}"] = f"{sub[-1]:.6g}"
        summary[f"final_distance_{name}"] = f"{dist[-1]:.6g}"
        summary[f"time_to_dist_{ERROR_THRESHOLD:g}_{name}"] = (
            f"{t_grid[hit[0]]:.6g}" if hit.size else "not reached")
    _write_summary(out_dir, "summary.txt", summary)
    return {"t": t_grid, "traces": traces, "methods": [m for m, _ in methods]}


def load_schedule_file(path, delta: float, n0: int) -> SwitchSchedule:
    """Plain-text schedule: one "time target" pair per line."""
    times, targets = [], []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        parts = stripped.split()
        if len(parts) != 2:
            raise ScheduleError(f"{path}:{lineno}: expected 'time target', got {line!r}")
        times.append(float(parts[0]))
        targets.append(int(parts[1]))
    return SwitchSchedule(times=np.asarray(times), targets=np.asarray(targets, dtype=int),
                          delta=delta, n0=n0)


def _apply_overrides(scn_data: dict, args) -> dict:
    out = dict(scn_data)
    if args.seed is not None:
        out["seed"] = args.seed
    if args.step is not None:
        out["step"] = args.step
    if args.horizon is not None:
        out["horizon"] = args.horizon
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchopt",
                                     description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"switchopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_scenario_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--scenario", required=True, help="scenario YAML path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the family seed")
        p.add_argument("--step", type=float, default=None, help="override the step size")
        p.add_argument("--horizon", type=float, default=None, help="override the horizon")
        return p

    add_scenario_cmd("figure1", "two-node relay: limit-set cloud and a perturbed arc")
    p2 = add_scenario_cmd("figure2", "objective trace under persistent switching")
    p2.add_argument("--variant", choices=("persistent", "sparse"), default="persistent")
    add_scenario_cmd("figure3", "four-method convergence comparison")
    add_scenario_cmd("omega", "limit-set cloud plus the dwell-rate sweep")

    pv = sub.add_parser("validate-schedule", help="check a schedule against the dwell bound")
    pv.add_argument("--schedule", required=True, help="text file, one 'time target' per line")
    pv.add_argument("--delta", type=float, required=True)
    pv.add_argument("--n0", type=int, required=True)

    pc = sub.add_parser("check", help="run the seeded property-check gate")
    pc.add_argument("--seed", type=int, default=0)
    pc.add_argument("--full", action="store_true", help="acceptance-scale workloads")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "check":
        results = run_checks(seed=args.seed, fast=not args.full)
        for r in results:
            print(r.line())
        return 0 if all(r.passed for r in results) else 1

    if args.command == "validate-schedule":
        try:
            sched = load_schedule_file(args.schedule, args.delta, args.n0)
        except (ScheduleError, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        ok, info = validate_schedule_cmd(sched)
        return 0 if ok else 1

    try:
        scn_path = Path(args.scenario)
        data = _apply_overrides(load_scenario(scn_path).raw, args)
        scn = scenario_from_dict(data, origin=str(scn_path))
        out_dir = Path(args.out)
        if args.command == "figure1":
            run_figure1(scn, out_dir)
        elif args.command == "figure2":
            run_figure2(scn, out_dir, variant=args.variant)
        elif args.command == "figure3":
            run_figure3(scn, out_dir)
        elif args.command == "omega":
            run_omega(scn, out_dir)
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    except ScheduleError as exc:
        print(f"schedule error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        # scenario values that violate a module precondition, or an
        # unreadable scenario path
        print(f"scenario error: {exc}", file=sys.stderr)
        return 2
    return 0


def validate_schedule_cmd(sched: SwitchSchedule) -> tuple[bool, dict | None]:
    from .hybrid import validate_schedule
    ok, info = validate_schedule(sched)
    if ok:
        print(f"valid: {len(sched)} switches satisfy the dwell bound "
              f"(delta={sched.delta:g}, n0={sched.n0})")
    else:
        print(f"invalid: interval [{info['s']:g}, {info['t']:g}] holds {info['count']} "
              f"switches, allowed {info['allowed']:g}")
    return ok, info


if __name__ == "__main__":
    sys.exit(main())
