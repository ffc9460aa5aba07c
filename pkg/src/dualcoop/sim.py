"""Fixed-step kinematic simulations.

Two experiments live here:

* the one-dimensional two-point system, where a relative command plus a
  secondary regulation task on point 1 yields a time-varying asymmetry;
* frame alignment on a two-arm robot, where the relative twist from the
  alignment feedback is resolved into joint rates by one of several
  cooperative methods and Euler-integrated.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import coop
from .chain import DualArmSystem, SystemState, limit_violations, system_state
from .coop import asymmetry_blocks, asymmetry_measure, check_alpha, cooperative_frames
from .geom import Pose, quat_from_rot, rot_of, rotation_angle
from .ik import (
    DEFAULT_OPTIONS,
    RankDeficiencyError,
    SolveOptions,
    alignment_error,
    check_gain,
    pinv,
    relative_task_twist,
    solve_pose,
    solve_priority,
)

log = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"


# ---------------------------------------------------------------------------
# Two-point example
# ---------------------------------------------------------------------------


def point_system_matrix(K: float) -> np.ndarray:
    """Closed-loop matrix of the two-point system.

    Relative command ``p1 - p2`` resolved symmetrically, plus the secondary
    command ``-K p1`` on point 1 projected into the nullspace.
    """
    return 0.5 * np.array([[-(K + 1.0), 1.0], [1.0 - K, -1.0]])


@dataclass(frozen=True)
class PointSystemConfig:
    K: float
    p1_0: float = 0.0
    p2_0: float = 1.0
    dt: float = 1e-3
    duration: float = 10.0
    integrator: str = "euler"

    def __post_init__(self):
        if not (self.K >= 0.0 and math.isfinite(self.K)):
            raise ValueError(f"secondary gain K must be finite and >= 0 (K > 0 regulates point 1), got {self.K}")
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.duration >= 0.0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if self.integrator not in ("euler", "rk4"):
            raise ValueError(f"integrator must be 'euler' or 'rk4', got {self.integrator!r}")


@dataclass(eq=False)
class PointLog:
    K: float
    time: np.ndarray
    p: np.ndarray
    pdot: np.ndarray

    @property
    def alpha(self) -> np.ndarray:
        a1, a2 = np.abs(self.pdot[:, 0]), np.abs(self.pdot[:, 1])
        total = a1 + a2
        out = np.full_like(total, 0.5)
        np.divide(a2, total, out=out, where=total > 0.0)
        return out

    @property
    def pdot_abs(self) -> np.ndarray:
        return 0.5 * (self.pdot[:, 0] + self.pdot[:, 1])

    columns = ("step", "time", "p1", "p2", "dp1", "dp2", "alpha", "dpa")

    def rows(self):
        alpha, dpa = self.alpha, self.pdot_abs
        for k in range(len(self.time)):
            yield (k, self.time[k], *self.p[k], *self.pdot[k], alpha[k], dpa[k])


def n_steps(duration: float, dt: float) -> int:
    # tolerate representation error, e.g. 10.0 / 0.005
    return int(math.floor(duration / dt + 1e-9))


def run_point_example(cfg: PointSystemConfig) -> PointLog:
    A = point_system_matrix(cfg.K)
    N = n_steps(cfg.duration, cfg.dt)
    h = cfg.dt
    p = np.empty((N + 1, 2))
    p[0] = (cfg.p1_0, cfg.p2_0)
    for k in range(N):
        x = p[k]
        if cfg.integrator == "euler":
            p[k + 1] = x + h * (A @ x)
        else:
            k1 = A @ x
            k2 = A @ (x + 0.5 * h * k1)
            k3 = A @ (x + 0.5 * h * k2)
            k4 = A @ (x + h * k3)
            p[k + 1] = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return PointLog(cfg.K, np.arange(N + 1) * h, p, p @ A.T)


# ---------------------------------------------------------------------------
# Two-arm alignment
# ---------------------------------------------------------------------------

TRANSLATIONAL_TARGETS = (np.array([0.36, 0.15, 0.36]), np.array([0.45, 0.0, 0.21]))
ROTATION_CENTER = 0.5 * (TRANSLATIONAL_TARGETS[0] + TRANSLATIONAL_TARGETS[1])
DEFAULT_ROTATION_AXIS = (0.0, 1.0, 0.0)
DEFAULT_ROTATION_ANGLE = math.pi / 12


class Method(str, Enum):
    CTS = "cts"
    ECTS = "ects"
    RELATIVE = "relative"
    ASYM_RELATIVE = "asym_relative"
    ASYM_PRIMARY = "asym_primary"  # ablation: asymmetric Jacobian as the only task
    PER_ARM = "per_arm"


ALPHA_METHODS = frozenset({Method.ECTS, Method.ASYM_RELATIVE, Method.ASYM_PRIMARY})


class Task(str, Enum):
    TRANSLATIONAL = "translational"
    ROTATIONAL = "rotational"
    CUSTOM = "custom"


class SecondaryKind(str, Enum):
    NONE = "none"
    END_EFFECTOR_1 = "end_effector_1"
    ASYM_RELATIVE = "asym_relative"
    RAW = "raw_joint_velocity"


@dataclass(frozen=True, eq=False)
class SecondaryTask:
    """Nullspace objective for ``Method.RELATIVE``.

    ``payload`` is a tool twist of arm 1 (``end_effector_1``) or a joint
    velocity vector (``raw_joint_velocity``); ``asym_relative`` uses the
    relative command itself with ``alpha``.
    """

    kind: SecondaryKind = SecondaryKind.NONE
    payload: np.ndarray | None = None
    alpha: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "kind", SecondaryKind(self.kind))
        check_alpha(self.alpha)
        if self.kind is SecondaryKind.END_EFFECTOR_1:
            payload = np.zeros(6) if self.payload is None else np.asarray(self.payload, dtype=float)
            if payload.shape != (6,):
                raise ValueError("end_effector_1 payload must be a 6-vector twist")
            object.__setattr__(self, "payload", payload)
        elif self.kind is SecondaryKind.RAW:
            if self.payload is None:
                raise ValueError("raw_joint_velocity needs a payload")
            object.__setattr__(self, "payload", np.asarray(self.payload, dtype=float))


@dataclass(frozen=True, eq=False)
class SimConfig:
    method: Method = Method.ASYM_RELATIVE
    alpha: float = 0.5
    dt: float = 0.005
    duration: float = 10.0
    Kp: np.ndarray = field(default_factory=lambda: np.eye(6))
    task: Task = Task.TRANSLATIONAL
    secondary: SecondaryTask = field(default_factory=SecondaryTask)
    seed_joints: np.ndarray | None = None
    rotation_axis: tuple = DEFAULT_ROTATION_AXIS
    rotation_angle: float = DEFAULT_ROTATION_ANGLE
    tolerance: float = 1e-6
    solve: SolveOptions = DEFAULT_OPTIONS
    per_arm_screw: bool = True

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "task", Task(self.task))
        alpha = check_alpha(self.alpha)
        # methods without a cooperation parameter are symmetric; report it as such
        object.__setattr__(self, "alpha", alpha if self.method in ALPHA_METHODS else 0.5)
        object.__setattr__(self, "Kp", check_gain(self.Kp))
        if not self.dt > 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.duration >= 0.0:
            raise ValueError(f"duration must be >= 0, got {self.duration}")
        if self.task is Task.CUSTOM and self.seed_joints is None:
            raise ValueError("custom task needs seed_joints")
        if self.secondary.kind is not SecondaryKind.NONE and self.method is not Method.RELATIVE:
            raise ValueError("secondary tasks apply to method 'relative' only")


class SimulationAborted(RuntimeError):
    def __init__(self, message: str, step: int, log: "SimLog"):
        super().__init__(message)
        self.step = step
        self.log = log


@dataclass(eq=False)
class SimLog:
    """Per-step record of an alignment run. Row ``k`` is the state at ``time[k]``.

    ``qdot[k]`` is the rate applied from ``time[k]`` on, and ``joint_path[k]``
    the integral of ``|qdot|`` up to ``time[k]``.
    """

    method: str
    alpha: float
    task: str
    dt: float
    n_joints: tuple[int, int]
    time: np.ndarray
    q: np.ndarray
    qdot: np.ndarray
    pose_o1: np.ndarray  # (N, 7) xyz + wxyz
    pose_o2: np.ndarray
    p_err: np.ndarray
    xi_err: np.ndarray
    abs_pose: np.ndarray  # CTS absolute frame, (N, 7)
    twists: np.ndarray  # realized object-frame twists [v_o1; v_o2], (N, 12)
    v_r: np.ndarray  # commanded relative twist, (N, 6)
    asym: np.ndarray
    asym_lin: np.ndarray
    asym_ang: np.ndarray
    rel_residual: np.ndarray
    joint_path: np.ndarray
    termination: str = "duration"

    def __len__(self) -> int:
        return len(self.time)

    @property
    def pos_err_norm(self) -> np.ndarray:
        return np.linalg.norm(self.p_err, axis=1)

    @property
    def rot_err_norm(self) -> np.ndarray:
        return np.linalg.norm(self.xi_err, axis=1)

    @property
    def error_norm(self) -> np.ndarray:
        return np.hypot(self.pos_err_norm, self.rot_err_norm)

    def orthogonal_channel(self) -> np.ndarray:
        """Error in the channel the task does not command."""
        if self.task == Task.TRANSLATIONAL.value:
            return self.rot_err_norm
        if self.task == Task.ROTATIONAL.value:
            return self.pos_err_norm
        raise ValueError("orthogonal channel is defined for the translational and rotational tasks only")

    def absolute_twists(self) -> np.ndarray:
        """Realized symmetric absolute twist ``(v_o1 + v_o2) / 2`` per step."""
        return 0.5 * (self.twists[:, :6] + self.twists[:, 6:])

    def summary(self) -> dict:
        pa0, paN = self.abs_pose[0], self.abs_pose[-1]
        R0 = Pose(pa0[:3], pa0[3:]).rotation
        RN = Pose(paN[:3], paN[3:]).rotation
        return {
            "method": self.method,
            "alpha": self.alpha,
            "task": self.task,
            "steps": len(self) - 1,
            "termination": self.termination,
            "final_pos_err": float(self.pos_err_norm[-1]),
            "final_rot_err": float(self.rot_err_norm[-1]),
            "max_pos_err": float(np.max(self.pos_err_norm)),
            "max_rot_err": float(np.max(self.rot_err_norm)),
            "joint_path": float(self.joint_path[-1]),
            "mean_asym": float(np.mean(self.asym)),
            "mean_asym_lin": float(np.mean(self.asym_lin)),
            "mean_asym_ang": float(np.mean(self.asym_ang)),
            "abs_disp_pos": float(np.linalg.norm(paN[:3] - pa0[:3])),
            "abs_disp_angle": float(rotation_angle(R0.T @ RN)),
        }

    # -- CSV -----------------------------------------------------------------

    METRIC_COLUMNS = (
        "po1_x", "po1_y", "po1_z",
        "po2_x", "po2_y", "po2_z",
        "perr_x", "perr_y", "perr_z",
        "xi_x", "xi_y", "xi_z",
        "pa_x", "pa_y", "pa_z",
        "qa_w", "qa_x", "qa_y", "qa_z",
        "err_pos", "err_rot",
        "asym", "asym_lin", "asym_ang",
        "rel_residual", "joint_path",
    )  # fmt: skip

    def columns(self) -> list[str]:
        joints = [f"q{arm}_{j}" for arm, n in ((1, self.n_joints[0]), (2, self.n_joints[1])) for j in range(n)]
        return ["step", "time", *joints, *(f"d{name}" for name in joints), *self.METRIC_COLUMNS]

    def rows(self):
        pos, rot = self.pos_err_norm, self.rot_err_norm
        for k in range(len(self)):
            yield (
                k,
                self.time[k],
                *self.q[k],
                *self.qdot[k],
                *self.pose_o1[k, :3],
                *self.pose_o2[k, :3],
                *self.p_err[k],
                *self.xi_err[k],
                *self.abs_pose[k],
                pos[k],
                rot[k],
                self.asym[k],
                self.asym_lin[k],
                self.asym_ang[k],
                self.rel_residual[k],
                self.joint_path[k],
            )


# -- initial conditions -------------------------------------------------------


def task_targets(task, axis=DEFAULT_ROTATION_AXIS, angle: float = DEFAULT_ROTATION_ANGLE) -> tuple[Pose, Pose]:
    """Object-frame poses the alignment tasks start from."""
    task = Task(task)
    if task is Task.TRANSLATIONAL:
        return Pose(TRANSLATIONAL_TARGETS[0]), Pose(TRANSLATIONAL_TARGETS[1])
    if task is Task.ROTATIONAL:
        axis = np.asarray(axis, dtype=float)
        axis = axis / np.linalg.norm(axis)
        return Pose(ROTATION_CENTER), Pose(ROTATION_CENTER, quat_from_rot(rot_of(axis, angle)))
    raise ValueError("custom tasks have no predefined targets")


def _pose_residual(a: Pose, b: Pose) -> float:
    return max(
        float(np.max(np.abs(a.position - b.position))),
        rotation_angle(a.rotation.T @ b.rotation),
    )


def initial_configuration(sys: DualArmSystem, cfg: SimConfig) -> np.ndarray:
    """Joint vector realizing the task's initial object poses.

    Starts from the stored seed and refines it by pose IK when the seed does
    not already realize the targets (e.g. for a non-default rotation axis).
    """
    if cfg.seed_joints is not None:
        q0 = np.asarray(cfg.seed_joints, dtype=float)
        sys.split(q0)
        if cfg.task is Task.CUSTOM:
            return q0
    else:
        q0 = sys.seed(cfg.task.value)
    targets = task_targets(cfg.task, cfg.rotation_axis, cfg.rotation_angle)
    state = system_state(sys, q0)
    if all(_pose_residual(o, t) < 1e-9 for o, t in zip(state.object_poses, targets)):
        return q0
    parts = []
    for chain, qi, off, target in zip(sys.arms, sys.split(q0), sys.object_offsets, targets):
        qi, _ = solve_pose(chain, target, qi, tool=off)
        parts.append(qi)
    return np.concatenate(parts)


# -- joint-rate resolution ----------------------------------------------------


def resolve_rates(sys: DualArmSystem, state: SystemState, v_r: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Joint rates for one step of the configured method."""
    opts = cfg.solve
    method = cfg.method
    if method in (Method.CTS, Method.ECTS):
        Linv = coop.invert_cts() if method is Method.CTS else coop.invert_ects(cfg.alpha)
        v_split = Linv @ np.concatenate([np.zeros(6), v_r])
        return _split_solve(sys, state, v_split, opts, use_screw=True)
    if method is Method.PER_ARM:
        return _split_solve(sys, state, coop.pinv_relative() @ v_r, opts, use_screw=cfg.per_arm_screw)

    WJ = state.WJ
    J_r = coop.linking("relative").matrix @ WJ
    if method is Method.ASYM_PRIMARY:
        return pinv(coop.linking("asym_relative", cfg.alpha).matrix @ WJ, opts) @ v_r
    if method is Method.ASYM_RELATIVE:
        zeta = pinv(coop.linking("asym_relative", cfg.alpha).matrix @ WJ, opts) @ v_r
        return solve_priority(J_r, v_r, zeta, opts)

    sec = cfg.secondary
    if sec.kind is SecondaryKind.NONE:
        return solve_priority(J_r, v_r, None, opts)
    if sec.kind is SecondaryKind.ASYM_RELATIVE:
        zeta = pinv(coop.linking("asym_relative", sec.alpha).matrix @ WJ, opts) @ v_r
    elif sec.kind is SecondaryKind.END_EFFECTOR_1:
        n1 = sys.left.n
        zeta = np.zeros(sys.n_total)
        zeta[:n1] = pinv(state.J[:6, :n1], opts) @ sec.payload
    else:
        zeta = sec.payload
    return solve_priority(J_r, v_r, zeta, opts)


def _split_solve(sys, state: SystemState, v_split, opts, use_screw: bool) -> np.ndarray:
    n1 = sys.left.n
    out = []
    for k, cols in enumerate((slice(0, n1), slice(n1, sys.n_total))):
        rows = slice(6 * k, 6 * k + 6)
        Ji = state.J[rows, cols]
        if use_screw:
            Ji = state.W[rows, rows] @ Ji
        out.append(pinv(Ji, opts) @ v_split[rows])
    return np.concatenate(out)


# -- main loop -----------------------------------------------------------------


def run_alignment(sys: DualArmSystem, cfg: SimConfig, q0=None) -> SimLog:
    """Drive the object frames into alignment with the configured method.

    Stops after ``duration`` or once ``|[p_err; xi]| < cfg.tolerance``. A
    rank-deficient Jacobian under ``error_on_deficient`` raises
    :class:`SimulationAborted` carrying the partial log.
    """
    q = initial_configuration(sys, cfg) if q0 is None else np.array(q0, dtype=float)
    N = n_steps(cfg.duration, cfg.dt)
    L_r = coop.linking("relative").matrix
    rec: dict[str, list] = {
        k: []
        for k in (
            "time", "q", "qdot", "pose_o1", "pose_o2", "p_err", "xi_err", "abs_pose",
            "twists", "v_r", "asym", "asym_lin", "asym_ang", "rel_residual", "joint_path",
        )
    }  # fmt: skip
    path = 0.0
    warned: set[tuple[int, int]] = set()
    termination = "duration"

    def finish(term: str) -> SimLog:
        arrays = {k: np.array(v) for k, v in rec.items()}
        return SimLog(
            cfg.method.value, cfg.alpha, cfg.task.value, cfg.dt, (sys.left.n, sys.right.n), **arrays, termination=term
        )

    for k in range(N + 1):
        state = system_state(sys, q)
        for arm, (chain, qi) in enumerate(zip(sys.arms, sys.split(q))):
            for j in limit_violations(chain, qi):
                if (arm, j) not in warned:
                    warned.add((arm, j))
                    log.warning("step %d: %s joint %d outside its limits", k, chain.name, j)
        o1, o2 = state.object_poses
        p_err, xi = alignment_error(o1, o2)
        v_r = relative_task_twist(o1, o2, cfg.Kp)
        try:
            qdot = resolve_rates(sys, state, v_r, cfg)
        except RankDeficiencyError as exc:
            log.error("step %d: %s", k, exc)
            raise SimulationAborted(f"rank deficiency at step {k}: {exc}", k, finish("aborted")) from exc
        twists = state.WJ @ qdot
        frames = cooperative_frames(o1, o2, "cts")
        rec["time"].append(k * cfg.dt)
        rec["q"].append(q.copy())
        rec["qdot"].append(qdot)
        rec["pose_o1"].append(o1.as_array())
        rec["pose_o2"].append(o2.as_array())
        rec["p_err"].append(p_err)
        rec["xi_err"].append(xi)
        rec["abs_pose"].append(frames.absolute.as_array())
        rec["twists"].append(twists)
        rec["v_r"].append(v_r)
        rec["asym"].append(asymmetry_measure(twists[:6], twists[6:]))
        lin, ang = asymmetry_blocks(twists[:6], twists[6:])
        rec["asym_lin"].append(lin)
        rec["asym_ang"].append(ang)
        rec["rel_residual"].append(float(np.max(np.abs(L_r @ twists - v_r))))
        rec["joint_path"].append(path)
        if math.hypot(np.linalg.norm(p_err), np.linalg.norm(xi)) < cfg.tolerance:
            termination = "converged"
            break
        if k < N:
            path += float(np.linalg.norm(qdot)) * cfg.dt
            q = q + cfg.dt * qdot
    return finish(termination)


# ---------------------------------------------------------------------------
# Comparison and persistence
# ---------------------------------------------------------------------------


def parse_method(spec: str, default_alpha: float = 0.5) -> tuple[Method, float]:
    """``"ects@0.8"`` -> ``(Method.ECTS, 0.8)``; bare names use ``default_alpha``."""
    name, _, alpha = spec.partition("@")
    method = Method(name.strip())
    return method, check_alpha(float(alpha)) if alpha else default_alpha


def compare_methods(
    sys: DualArmSystem, cfg: SimConfig, methods: Iterable
) -> tuple[list[dict], dict[str, SimLog]]:
    """Run the same task with each method; returns summary rows and logs.

    ``methods`` holds ``Method`` values, names, or ``"name@alpha"`` strings.
    """
    rows, logs = [], {}
    q0 = initial_configuration(sys, cfg)
    for spec in methods:
        if isinstance(spec, tuple):
            method, alpha = Method(spec[0]), check_alpha(spec[1])
        else:
            method, alpha = parse_method(str(getattr(spec, "value", spec)), cfg.alpha)
        label = f"{method.value}@{alpha:g}" if method in ALPHA_METHODS else method.value
        run_cfg = _replace(cfg, method=method, alpha=alpha)
        sim = run_alignment(sys, run_cfg, q0=q0)
        logs[label] = sim
        rows.append({"label": label, **sim.summary()})
    return rows, logs


def _replace(cfg: SimConfig, **changes) -> SimConfig:
    from dataclasses import replace

    return replace(cfg, **changes)


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % value
    return str(value)


def write_rows(path, columns: Sequence[str], rows) -> None:
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_csv(log, path) -> None:
    """Write a :class:`SimLog` or :class:`PointLog` with 17 significant digits."""
    cols = log.columns() if callable(log.columns) else log.columns
    write_rows(path, cols, log.rows())


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(x) for x in row] for row in reader]
    return header, np.array(data).reshape(len(data), len(header))


SUMMARY_COLUMNS = (
    "label", "method", "alpha", "task", "steps", "termination",
    "final_pos_err", "final_rot_err", "max_pos_err", "max_rot_err",
    "joint_path", "mean_asym", "mean_asym_lin", "mean_asym_ang",
    "abs_disp_pos", "abs_disp_angle",
)  # fmt: skip


def write_summary_csv(rows: list[dict], path) -> None:
    write_rows(path, SUMMARY_COLUMNS, ([r[c] for c in SUMMARY_COLUMNS] for r in rows))


def summary_text(rows: list[dict], columns: Sequence[str] = SUMMARY_COLUMNS) -> str:
    """Aligned plain-text table."""

    def cell(v):
        return f"{v:.6g}" if isinstance(v, (float, np.floating)) else str(v)

    table = [list(columns)] + [[cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(columns))]
    lines = ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in table]
    return "\n".join(lines) + "\n"
