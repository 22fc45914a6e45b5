"""Command-line entry point: ``conioa {run,batch,bench,validate}``.

Exit codes: 0 success, 2 the trial failed (or a batch had errored trials),
1 usage/configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

log = logging.getLogger("conioa")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_TRIAL_FAILED = 2


class CliError(Exception):
    pass


def _prepare_out(path: str | None, force: bool) -> Path | None:
    if path is None:
        return None
    out = Path(path)
    if out.exists() and not out.is_dir():
        raise CliError(f"--out {out} exists and is not a directory")
    if out.is_dir() and any(out.iterdir()) and not force:
        raise CliError(f"--out {out} is not empty (pass --force to overwrite)")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load(args):
    from conioa.sim.scenario import ScenarioError, load_scenario, scenario_from_dict

    overrides = list(args.override or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"seed={args.seed}")
    try:
        if args.scenario:
            return load_scenario(args.scenario, overrides)
        return scenario_from_dict({}, overrides)
    except ScenarioError as err:
        raise CliError(f"invalid scenario: {err}") from None


def cmd_validate(args) -> int:
    spec = _load(args)
    print(f"ok: scenario {spec.name!r} (schema v{spec.version})")
    return EXIT_OK


def cmd_run(args) -> int:
    from conioa.sim.trial import run_trial

    spec = _load(args)
    out = _prepare_out(args.out, args.force)
    metrics = run_trial(spec)
    if out is not None:
        metrics.write(out, spec)
    s = metrics.summary()
    print(
        f"{'SUCCESS' if s['success'] else 'FAILURE'}: min_clearance={s['min_clearance']:.3f} m "
        f"tracking_rmse={s['tracking_rmse']:.3f} m solve={1e3 * s['mean_solve_time']:.2f} ms"
        + ("" if s["landed"] is None else f" landed={'yes' if s['landed'] else 'no'}")
        + (f" ({s['diagnostic']})" if s["diagnostic"] else "")
    )
    return EXIT_OK if metrics.success else EXIT_TRIAL_FAILED


def _keys(text: str | None, allowed: dict, flag: str):
    if text is None:
        return None
    keys = [k.strip() for k in text.split(",") if k.strip()]
    bad = [k for k in keys if k not in allowed]
    if bad or not keys:
        raise CliError(f"{flag}: unknown value(s) {bad}; choose from {sorted(allowed)}")
    return keys


def cmd_batch(args) -> int:
    from conioa.sim.batch import DENSITIES, SPEEDS, TASKS, run_batch

    spec = _load(args)
    out = _prepare_out(args.out, args.force)
    parallel = 1 if args.single_thread else args.parallel

    def progress(done, total):
        log.info("trial %d/%d", done, total)

    result = run_batch(
        spec,
        trials=args.trials,
        densities=_keys(args.densities, DENSITIES, "--densities"),
        speeds=_keys(args.speeds, SPEEDS, "--speeds"),
        tasks=_keys(args.tasks, TASKS, "--tasks"),
        seed=spec.seed,
        parallel=parallel,
        progress=progress,
    )
    if out is not None:
        result.write(out)
    print(f"{'task':<5}{'density':<9}{'speed':<6}{'success':>9}")
    for c in result.cells:
        print(f"{c.task:<5}{c.density:<9}{c.speed:<6}{100.0 * c.success_rate:>8.1f}%")
    errors = sum(c.errors for c in result.cells)
    if errors:
        log.error("%d trial(s) raised errors; see outcomes in table.json", errors)
        return EXIT_TRIAL_FAILED
    return EXIT_OK


def cmd_bench(args) -> int:
    from conioa.bench import bench_gen_trajectory, bench_mpc
    from conioa.sim.scenario import SCHEMA_VERSION

    out = _prepare_out(args.out, args.force)
    seed = 0 if args.seed is None else args.seed
    report = {
        "schema_version": SCHEMA_VERSION,
        "gen_trajectory": [
            bench_gen_trajectory(n, args.horizon, args.repeats, seed) for n in args.n_points
        ],
        "mpc_solve": bench_mpc(args.mpc_horizon, args.repeats, seed),
    }
    for row in report["gen_trajectory"]:
        print(f"gen_trajectory n={row['n_points']:<6} h={row['horizon']:<3} "
              f"mean={row['mean_ms']:.3f} ms p95={row['p95_ms']:.3f} ms")
    for mode in ("warm", "cold"):
        row = report["mpc_solve"][mode]
        print(f"mpc_solve {mode} N={args.mpc_horizon} mean={row['mean_ms']:.3f} ms "
              f"p95={row['p95_ms']:.3f} ms iterations={row['mean_iterations']:.2f}")
    if out is not None:
        (out / "bench.json").write_text(json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conioa", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, scenario=True):
        if scenario:
            p.add_argument("--scenario", help="scenario JSON file (defaults are used when omitted)")
            p.add_argument("--override", action="append", metavar="KEY=VALUE",
                           help="dotted-key override, repeatable (e.g. ugv.v_max=1.5)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory (created if absent)")
        p.add_argument("--force", action="store_true", help="allow writing into a non-empty --out")
        p.add_argument("--single-thread", action="store_true", help="no worker processes")

    p = sub.add_parser("run", help="run one closed-loop trial")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="success-rate table over density x speed x task")
    common(p)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--parallel", type=int, default=1, help="worker processes")
    p.add_argument("--densities", help="comma list from sparse,medium,dense")
    p.add_argument("--speeds", help="comma list from slow,fast")
    p.add_argument("--tasks", help="comma list from LF,OF")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("bench", help="time gen_trajectory and the MPC solve")
    common(p, scenario=False)
    p.add_argument("--n-points", type=int, nargs="+", default=[400, 4000])
    p.add_argument("--horizon", type=int, default=20)
    p.add_argument("--mpc-horizon", type=int, default=20)
    p.add_argument("--repeats", type=int, default=50)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("validate", help="check a scenario file against the schema")
    p.add_argument("--scenario", required=True)
    p.add_argument("--override", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(message)s",
    )
    if getattr(args, "single_thread", False):
        os.environ.setdefault("NUMBA_NUM_THREADS", "1")
    if getattr(args, "trials", 1) < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
