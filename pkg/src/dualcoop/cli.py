"""Command-line front end.

Exit codes: 0 success, 1 selfcheck failure, 2 usage error, 3 I/O error,
4 numerical abort (rank deficiency under ``--rank-policy error_on_deficient``).

Output files go to ``--out``; when omitted, the directory named by the
``DUALCOOP_OUT`` environment variable, else the current directory.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import sim
from .chain import ConfigError, load_bundled, load_system_file
from .coop import ALPHA_GRID, IDENTITY_DESCRIPTIONS, check_alpha, cooperative_frames, identity_suite
from .geom import Pose
from .ik import RankPolicy, SolveOptions

EXIT_OK = 0
EXIT_SELFCHECK = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

OUT_ENV = "DUALCOOP_OUT"

log = logging.getLogger("dualcoop")


class UsageError(Exception):
    pass


# -- argument types -----------------------------------------------------------


def _alpha(text: str) -> float:
    try:
        return check_alpha(float(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"alpha must be a number in [0, 1], got {text!r}") from None


def _positive(text: str) -> float:
    value = float(text)
    if not (value > 0.0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text!r}")
    return value


def _nonnegative(text: str) -> float:
    value = float(text)
    if not (value >= 0.0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(f"must be a number >= 0, got {text!r}")
    return value


def _gain(text: str) -> float:
    value = float(text)
    if not (value >= 0.0 and math.isfinite(value)):
        raise argparse.ArgumentTypeError(
            f"K must be >= 0 (the secondary task on point 1 needs K > 0; K = 0 is the symmetric case), got {text!r}"
        )
    return value


_TASKS = {"trans": "translational", "translational": "translational", "rot": "rotational", "rotational": "rotational"}


def _task(text: str) -> str:
    try:
        return _TASKS[text]
    except KeyError:
        raise argparse.ArgumentTypeError(f"task must be one of trans, rot, got {text!r}") from None


def _method_spec(text: str) -> str:
    try:
        sim.parse_method(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad method {text!r}: {exc}") from None
    return text


# -- parser -------------------------------------------------------------------


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--robot", type=Path, help="robot config (TOML); default: bundled twin-7dof")
    p.add_argument("--alpha", type=_alpha, default=None, help="cooperation parameter in [0, 1] (default 0.5)")
    p.add_argument("--task", type=_task, default="translational", help="trans or rot (default trans)")
    p.add_argument("--dt", type=_positive, default=0.005, help="integration step in s (default 0.005)")
    p.add_argument("--duration", type=_nonnegative, default=10.0, help="simulated time in s (default 10)")
    p.add_argument("--kp", type=_positive, default=1.0, help="scalar feedback gain, Kp = kp I6 (default 1)")
    p.add_argument("--axis", type=float, nargs=3, default=list(sim.DEFAULT_ROTATION_AXIS), help="rotational task axis")
    p.add_argument("--angle", type=float, default=sim.DEFAULT_ROTATION_ANGLE, help="rotational task angle in rad")
    p.add_argument("--rank-policy", choices=[r.value for r in RankPolicy], default=RankPolicy.CONTINUE.value)
    p.add_argument("--damping", type=_nonnegative, default=0.0, help="damped least-squares factor (default 0)")
    p.add_argument("--q0", type=float, nargs="+", help="start configuration (custom task; overrides --task)")
    p.add_argument("--out", type=Path, default=None, help=f"output directory (default ${OUT_ENV} or .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualcoop", description="Cooperative dual-arm kinematics experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("point-example", help="two-point system with a secondary task on point 1")
    p.add_argument("--K", type=_gain, nargs="+", default=[0.0, 1.0, 4.0, 8.0], help="secondary gains (default 0 1 4 8)")
    p.add_argument("--dt", type=_positive, default=1e-3)
    p.add_argument("--duration", type=_nonnegative, default=10.0)
    p.add_argument("--p0", type=float, nargs=2, default=[0.0, 1.0], metavar=("P1", "P2"))
    p.add_argument("--integrator", choices=["euler", "rk4"], default="euler")
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("align", help="one frame-alignment run")
    p.add_argument("--method", choices=[m.value for m in sim.Method], default=sim.Method.ASYM_RELATIVE.value)
    _add_run_flags(p)

    p = sub.add_parser("compare", help="the same alignment task under several methods")
    p.add_argument(
        "--methods",
        type=_method_spec,
        nargs="+",
        default=["cts", "ects", "relative", "asym_relative"],
        help="method names, optionally name@alpha (default cts ects relative asym_relative)",
    )
    _add_run_flags(p)

    p = sub.add_parser("frames", help="cooperative frames at a joint configuration")
    p.add_argument("--robot", type=Path)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--seed", default="translational", help="named seed from the robot config")
    group.add_argument("--q", type=float, nargs="+", help="explicit joint vector")
    p.add_argument("--alpha", type=_alpha, default=0.5)
    p.add_argument("--out", type=Path, default=None)

    p = sub.add_parser("selfcheck", help="linking-matrix identity suite")
    p.add_argument("--n-random", type=int, default=1000)
    p.add_argument("--rng-seed", type=int, default=0)
    p.add_argument("--tolerance", type=_positive, default=1e-12)
    p.add_argument("--inject-fault", action="append", default=[], help=argparse.SUPPRESS)
    return parser


# -- helpers ------------------------------------------------------------------


def _out_dir(arg: Path | None) -> Path:
    out = arg if arg is not None else Path(os.environ.get(OUT_ENV, "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    return out


def _load_robot(path: Path | None):
    if path is None:
        return load_bundled()
    try:
        return load_system_file(path)
    except FileNotFoundError:
        raise UsageError(f"robot config not found: {path}") from None
    except ConfigError as exc:
        raise UsageError(f"robot config {path}: {exc}") from None


def _sim_config(args, method: str) -> sim.SimConfig:
    alpha = 0.5 if args.alpha is None else args.alpha
    try:
        return sim.SimConfig(
            method=method,
            alpha=alpha,
            dt=args.dt,
            duration=args.duration,
            Kp=args.kp * np.eye(6),
            task=args.task if args.q0 is None else "custom",
            seed_joints=None if args.q0 is None else np.asarray(args.q0, dtype=float),
            rotation_axis=tuple(args.axis),
            rotation_angle=args.angle,
            solve=SolveOptions(damping=args.damping, rank_policy=args.rank_policy),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _check_q0(args, system) -> None:
    if args.q0 is not None and len(args.q0) != system.n_total:
        raise UsageError(f"--q0 needs {system.n_total} values, got {len(args.q0)}")


def _summary_line(summary: dict) -> str:
    return (
        f"{summary['method']} alpha={summary['alpha']:g} task={summary['task']} steps={summary['steps']} "
        f"termination={summary['termination']} final_pos_err={summary['final_pos_err']:.3e} "
        f"final_rot_err={summary['final_rot_err']:.3e} joint_path={summary['joint_path']:.6f} "
        f"mean_asym={summary['mean_asym']:.4f} (lin {summary['mean_asym_lin']:.4f}, ang {summary['mean_asym_ang']:.4f})"
    )


def _k_label(K: float) -> str:
    return f"{K:g}".replace(".", "p")


# -- commands -----------------------------------------------------------------


def cmd_point_example(args) -> int:
    out = _out_dir(args.out)
    logs = []
    for K in args.K:
        cfg = sim.PointSystemConfig(K, args.p0[0], args.p0[1], args.dt, args.duration, args.integrator)
        trace = sim.run_point_example(cfg)
        sim.write_csv(trace, out / f"point_K{_k_label(K)}.csv")
        logs.append(trace)
    time = logs[0].time
    columns = ["step", "time", *(f"alpha_K{K:g}" for K in args.K)]
    alphas = [t.alpha for t in logs]
    rows = ((k, time[k], *(a[k] for a in alphas)) for k in range(len(time)))
    sim.write_rows(out / "point_alpha.csv", columns, rows)
    print(f"wrote {len(logs)} traces and point_alpha.csv to {out}")
    return EXIT_OK


def _warn_ignored_alpha(method: sim.Method, alpha) -> None:
    if alpha is not None and method not in sim.ALPHA_METHODS:
        log.warning("--alpha is ignored for method %s", method.value)


def cmd_align(args) -> int:
    method = sim.Method(args.method)
    _warn_ignored_alpha(method, args.alpha)
    system = _load_robot(args.robot)
    _check_q0(args, system)
    cfg = _sim_config(args, method.value)
    out = _out_dir(args.out)
    run = sim.run_alignment(system, cfg)
    path = out / f"align_{method.value}_{cfg.task.value}.csv"
    sim.write_csv(run, path)
    print(_summary_line(run.summary()))
    print(f"wrote {path}")
    return EXIT_OK


def cmd_compare(args) -> int:
    for spec in args.methods:
        method, alpha = sim.parse_method(spec)
        if "@" not in spec:
            _warn_ignored_alpha(method, args.alpha)
        elif method not in sim.ALPHA_METHODS:
            log.warning("alpha in %r is ignored for method %s", spec, method.value)
    system = _load_robot(args.robot)
    _check_q0(args, system)
    cfg = _sim_config(args, "cts")
    out = _out_dir(args.out)
    rows, logs = sim.compare_methods(system, cfg, args.methods)
    for label, run in logs.items():
        sim.write_csv(run, out / f"compare_{label.replace('@', '_a')}_{cfg.task.value}.csv")
    sim.write_summary_csv(rows, out / "summary.csv")
    text = sim.summary_text(rows)
    (out / "summary.txt").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_frames(args) -> int:
    system = _load_robot(args.robot)
    if args.q is not None:
        q = np.asarray(args.q, dtype=float)
        if q.size != system.n_total:
            raise UsageError(f"--q needs {system.n_total} values, got {q.size}")
    else:
        try:
            q = system.seed(args.seed)
        except KeyError as exc:
            raise UsageError(str(exc.args[0])) from None
    from .chain import system_state

    state = system_state(system, q)
    o1, o2 = state.object_poses
    rows: list[tuple[str, Pose]] = [
        ("ee1", state.ee_poses[0]),
        ("ee2", state.ee_poses[1]),
        ("o1", o1),
        ("o2", o2),
    ]
    for conv in ("cts", "ects", "asym_relative"):
        frames = cooperative_frames(o1, o2, conv, args.alpha)
        rows.append((f"{conv}_absolute", frames.absolute))
        rows.append((f"{conv}_relative", frames.relative))
    columns = ["frame", "x", "y", "z", "qw", "qx", "qy", "qz"]
    out = _out_dir(args.out)
    sim.write_rows(out / "frames.csv", columns, ((name, *pose.as_array()) for name, pose in rows))
    width = max(len(name) for name, _ in rows)
    for name, pose in rows:
        print(f"{name.ljust(width)}  " + "  ".join(f"{v: .6f}" for v in pose.as_array()))
    return EXIT_OK


def cmd_selfcheck(args) -> int:
    unknown = set(args.inject_fault) - set(IDENTITY_DESCRIPTIONS)
    if unknown:
        raise UsageError(f"unknown identity for fault injection: {sorted(unknown)}")
    results = identity_suite(ALPHA_GRID, args.n_random, args.rng_seed, args.tolerance, args.inject_fault)
    width = max(len(r.name) for r in results)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name.ljust(width)}  max_err={r.max_error:.3e}  {r.description}")
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"selfcheck failed: {', '.join(failed)}")
        return EXIT_SELFCHECK
    print(f"selfcheck passed: {len(results)} identities, alpha grid {ALPHA_GRID[0]:g}..{ALPHA_GRID[-1]:g}")
    return EXIT_OK


COMMANDS = {
    "point-example": cmd_point_example,
    "align": cmd_align,
    "compare": cmd_compare,
    "frames": cmd_frames,
    "selfcheck": cmd_selfcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    saved = (log.level, log.propagate)
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"dualcoop {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except sim.SimulationAborted as exc:
        print(f"dualcoop {args.command}: aborted at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except RuntimeError as exc:
        print(f"dualcoop {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"dualcoop {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    finally:
        log.removeHandler(handler)
        log.setLevel(saved[0])
        log.propagate = saved[1]


if __name__ == "__main__":
    raise SystemExit(main())
