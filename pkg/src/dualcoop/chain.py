"""Serial-manipulator kinematics and the two-arm system model.

Chains use the classic (distal) Denavit-Hartenberg convention: the
transform of row ``j`` is ``Rz(theta) Tz(d) Tx(a) Rx(alpha)`` and joint ``j``
moves about the z-axis of frame ``j-1``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path

import numpy as np

from .geom import Pose, screw_transform

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)

MIN_JOINTS = 6
BUNDLED_MODEL = "twin-7dof"


class ConfigError(ValueError):
    """Robot configuration could not be parsed or validated."""


class ConfigWarning(UserWarning):
    """A robot configuration field was missing and a default was used."""


class JointKind(str, Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"


@dataclass(frozen=True)
class DHRow:
    a: float
    alpha: float
    d: float
    theta_offset: float = 0.0
    kind: JointKind = JointKind.REVOLUTE

    def __post_init__(self):
        object.__setattr__(self, "kind", JointKind(self.kind))
        for name in ("a", "alpha", "d", "theta_offset"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"DH field {name} must be finite, got {value}")
            object.__setattr__(self, name, value)

    def transform(self, q: float) -> np.ndarray:
        if self.kind is JointKind.REVOLUTE:
            theta, d = self.theta_offset + q, self.d
        else:
            theta, d = self.theta_offset, self.d + q
        ct, st = math.cos(theta), math.sin(theta)
        ca, sa = math.cos(self.alpha), math.sin(self.alpha)
        return np.array(
            [
                [ct, -st * ca, st * sa, self.a * ct],
                [st, ct * ca, -ct * sa, self.a * st],
                [0.0, sa, ca, d],
                [0.0, 0.0, 0.0, 1.0],
            ]
        )


@dataclass(frozen=True, eq=False)
class SerialChain:
    name: str
    base_pose: Pose
    rows: tuple[DHRow, ...]
    joint_limits: np.ndarray
    tool_offset: Pose = field(default_factory=Pose)

    def __post_init__(self):
        rows = tuple(self.rows)
        object.__setattr__(self, "rows", rows)
        if len(rows) < MIN_JOINTS:
            raise ConfigError(
                f"chain {self.name!r} has {len(rows)} joints; "
                f"n >= {MIN_JOINTS} joints are required per arm"
            )
        limits = np.array(self.joint_limits, dtype=float)
        if limits.shape != (len(rows), 2):
            raise ConfigError(
                f"chain {self.name!r}: limits must be {len(rows)} [lo, hi] pairs, got shape {limits.shape}"
            )
        bad = np.flatnonzero(~(limits[:, 0] < limits[:, 1]))
        if bad.size:
            raise ConfigError(f"chain {self.name!r}: joint {int(bad[0])} has lo >= hi in limits")
        limits.flags.writeable = False
        object.__setattr__(self, "joint_limits", limits)

    @property
    def n(self) -> int:
        return len(self.rows)


@dataclass(frozen=True, eq=False)
class DualArmSystem:
    """Two chains; index 1 is the left arm, index 2 the right arm.

    ``object_offsets[i]`` places the object frame rigidly in the tool frame
    of arm ``i + 1``; its translation is the virtual stick.
    """

    left: SerialChain
    right: SerialChain
    object_offsets: tuple[Pose, Pose] = (Pose(), Pose())
    name: str = "dual-arm"
    seeds: dict = field(default_factory=dict)

    @property
    def arms(self) -> tuple[SerialChain, SerialChain]:
        return (self.left, self.right)

    @property
    def n_total(self) -> int:
        return self.left.n + self.right.n

    def split(self, q) -> tuple[np.ndarray, np.ndarray]:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.n_total,):
            raise ValueError(f"joint vector must have length {self.n_total}, got shape {q.shape}")
        return q[: self.left.n], q[self.left.n :]

    def seed(self, name: str) -> np.ndarray:
        try:
            return np.array(self.seeds[name], dtype=float)
        except KeyError:
            raise KeyError(f"system {self.name!r} has no seed {name!r}; available: {sorted(self.seeds)}") from None


# ---------------------------------------------------------------------------
# Kinematics
# ---------------------------------------------------------------------------


def _check_q(chain: SerialChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.shape[0] != chain.n:
        raise ValueError(f"chain {chain.name!r} expects {chain.n} joint values, got {q.shape[0]}")
    if log.isEnabledFor(logging.DEBUG):
        out = limit_violations(chain, q)
        if out:
            log.debug("chain %s: joints %s outside limits", chain.name, out)
    return q


def limit_violations(chain: SerialChain, q) -> list[int]:
    """Indices of joints outside their (advisory) limits."""
    q = np.asarray(q, dtype=float)
    lo, hi = chain.joint_limits[:, 0], chain.joint_limits[:, 1]
    return np.flatnonzero((q < lo) | (q > hi)).tolist()


def _link_frames(chain: SerialChain, q: np.ndarray) -> list[np.ndarray]:
    """Homogeneous transforms of frames 0..n in the base frame."""
    T = chain.base_pose.matrix()
    frames = [T]
    for row, qj in zip(chain.rows, q):
        T = T @ row.transform(qj)
        frames.append(T)
    return frames


def forward_kinematics(chain: SerialChain, q) -> Pose:
    """Pose of the tool frame ``{h_i}`` in the base frame."""
    q = _check_q(chain, q)
    T = _link_frames(chain, q)[-1] @ chain.tool_offset.matrix()
    return Pose.from_matrix(T)


def geometric_jacobian(chain: SerialChain, q) -> np.ndarray:
    """6 x n Jacobian mapping joint rates to the tool twist ``[v; w]``."""
    q = _check_q(chain, q)
    frames = _link_frames(chain, q)
    p_e = (frames[-1] @ chain.tool_offset.matrix())[:3, 3]
    J = np.zeros((6, chain.n))
    for j, row in enumerate(chain.rows):
        z = frames[j][:3, 2]
        if row.kind is JointKind.REVOLUTE:
            J[:3, j] = np.cross(z, p_e - frames[j][:3, 3])
            J[3:, j] = z
        else:
            J[:3, j] = z
    return J


def end_effector_poses(sys: DualArmSystem, q) -> tuple[Pose, Pose]:
    q1, q2 = sys.split(q)
    return forward_kinematics(sys.left, q1), forward_kinematics(sys.right, q2)


def object_poses(sys: DualArmSystem, q) -> tuple[Pose, Pose]:
    """Poses of the object frames ``{h_o1}``, ``{h_o2}``."""
    ee = end_effector_poses(sys, q)
    return tuple(pose @ off for pose, off in zip(ee, sys.object_offsets))


def virtual_sticks(sys: DualArmSystem, q) -> tuple[np.ndarray, np.ndarray]:
    """``r_i = p_oi - p_i`` in the base frame."""
    return tuple(
        pose.rotation @ off.position for pose, off in zip(end_effector_poses(sys, q), sys.object_offsets)
    )


def block_jacobian(sys: DualArmSystem, q) -> np.ndarray:
    q1, q2 = sys.split(q)
    n1, n2 = sys.left.n, sys.right.n
    J = np.zeros((12, n1 + n2))
    J[:6, :n1] = geometric_jacobian(sys.left, q1)
    J[6:, n1:] = geometric_jacobian(sys.right, q2)
    return J


def stacked_screw(sys: DualArmSystem, q) -> np.ndarray:
    W = np.zeros((12, 12))
    r1, r2 = virtual_sticks(sys, q)
    W[:6, :6] = screw_transform(r1)
    W[6:, 6:] = screw_transform(r2)
    return W


def object_jacobian(sys: DualArmSystem, q) -> np.ndarray:
    """``W @ J``: joint rates to the stacked object-frame twists."""
    return stacked_screw(sys, q) @ block_jacobian(sys, q)


@dataclass(frozen=True, eq=False)
class SystemState:
    """Everything the velocity-level solvers need at one configuration."""

    q: np.ndarray
    ee_poses: tuple[Pose, Pose]
    object_poses: tuple[Pose, Pose]
    J: np.ndarray
    W: np.ndarray

    @property
    def WJ(self) -> np.ndarray:
        return self.W @ self.J


def system_state(sys: DualArmSystem, q) -> SystemState:
    """FK, Jacobians and screw transforms from a single pass over each chain."""
    q = np.asarray(q, dtype=float)
    q1, q2 = sys.split(q)
    J = np.zeros((12, sys.n_total))
    W = np.eye(12)
    ee, obj = [], []
    col = 0
    for k, (chain, qi, off) in enumerate(zip(sys.arms, (q1, q2), sys.object_offsets)):
        qi = _check_q(chain, qi)
        frames = _link_frames(chain, qi)
        T_e = frames[-1] @ chain.tool_offset.matrix()
        stack = np.stack(frames[:-1])
        Z = stack[:, :3, 2].T
        D = (T_e[:3, 3] - stack[:, :3, 3]).T
        lin = np.array([Z[1] * D[2] - Z[2] * D[1], Z[2] * D[0] - Z[0] * D[2], Z[0] * D[1] - Z[1] * D[0]])
        revolute = np.array([row.kind is JointKind.REVOLUTE for row in chain.rows])
        cols = slice(col, col + chain.n)
        J[6 * k : 6 * k + 3, cols] = np.where(revolute, lin, Z)
        J[6 * k + 3 : 6 * k + 6, cols] = np.where(revolute, Z, 0.0)
        col += chain.n
        pose = Pose.from_matrix(T_e)
        ee.append(pose)
        obj.append(pose @ off)
        W[6 * k : 6 * k + 6, 6 * k : 6 * k + 6] = screw_transform(T_e[:3, :3] @ off.position)
    return SystemState(q, tuple(ee), tuple(obj), J, W)


# ---------------------------------------------------------------------------
# Configuration files
# ---------------------------------------------------------------------------

_ARM_SECTIONS = ("left", "right")


def _pose_field(table: dict, key: str, where: str, default: bool = False) -> Pose:
    if key not in table:
        if default:
            warnings.warn(f"{where}: missing {key!r}, using identity", ConfigWarning, stacklevel=4)
            return Pose()
        raise ConfigError(f"{where}: missing required field {key!r}")
    vals = table[key]
    try:
        vals = [float(v) for v in vals]
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}: expected 7 numbers [x, y, z, qw, qx, qy, qz]") from None
    if len(vals) != 7:
        raise ConfigError(f"{where}.{key}: expected 7 numbers [x, y, z, qw, qx, qy, qz], got {len(vals)}")
    try:
        return Pose(vals[:3], vals[3:])
    except ValueError as exc:
        raise ConfigError(f"{where}.{key}: {exc}") from None


def _parse_arm(name: str, table: dict) -> tuple[SerialChain, Pose]:
    where = f"[arm.{name}]"
    if "dh" not in table:
        raise ConfigError(f"{where}: missing required field 'dh'")
    rows = []
    for i, entry in enumerate(table["dh"]):
        if len(entry) != 5:
            raise ConfigError(f"{where}.dh[{i}]: expected [a, alpha, d, theta_offset, kind]")
        try:
            rows.append(DHRow(*(float(v) for v in entry[:4]), kind=entry[4]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where}.dh[{i}]: {exc}") from None
    if "limits" in table:
        limits = table["limits"]
    else:
        limits = [[-math.pi, math.pi]] * len(rows)
    chain = SerialChain(
        name=table.get("name", name),
        base_pose=_pose_field(table, "base_pose", where),
        rows=tuple(rows),
        joint_limits=limits,
        tool_offset=_pose_field(table, "tool_offset", where, default=True),
    )
    return chain, _pose_field(table, "object_offset", where, default=True)


def load_system(config_text: str) -> DualArmSystem:
    """Parse and validate a two-arm robot description (TOML text)."""
    try:
        doc = tomllib.loads(config_text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"parse error: {exc}") from None
    arms = doc.get("arm")
    if not isinstance(arms, dict):
        raise ConfigError("missing [arm.left] / [arm.right] sections")
    parsed = []
    for name in _ARM_SECTIONS:
        if name not in arms:
            raise ConfigError(f"missing section [arm.{name}]")
        parsed.append(_parse_arm(name, arms[name]))
    (left, off1), (right, off2) = parsed
    seeds = {}
    for key, vals in doc.get("seed", {}).items():
        q = np.array(vals, dtype=float)
        if q.shape != (left.n + right.n,):
            raise ConfigError(f"[seed].{key}: expected {left.n + right.n} joint values, got {q.size}")
        seeds[key] = q
    return DualArmSystem(left, right, (off1, off2), name=doc.get("name", "dual-arm"), seeds=seeds)


def load_system_file(path) -> DualArmSystem:
    return load_system(Path(path).read_text(encoding="utf-8"))


def bundled_config_text(name: str = BUNDLED_MODEL) -> str:
    return resources.files("dualcoop").joinpath("data", f"{name}.toml").read_text(encoding="utf-8")


def load_bundled(name: str = BUNDLED_MODEL) -> DualArmSystem:
    return load_system(bundled_config_text(name))


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt_list(vals) -> str:
    return "[" + ", ".join(_fmt(v) for v in vals) + "]"


def dump_system(sys: DualArmSystem) -> str:
    """Serialize to the same TOML layout :func:`load_system` reads."""
    lines = [f'name = "{sys.name}"', ""]
    for section, chain, off in zip(_ARM_SECTIONS, sys.arms, sys.object_offsets):
        lines.append(f"[arm.{section}]")
        lines.append(f'name = "{chain.name}"')
        lines.append(f"base_pose = {_fmt_list(chain.base_pose.as_array())}")
        lines.append(f"tool_offset = {_fmt_list(chain.tool_offset.as_array())}")
        lines.append(f"object_offset = {_fmt_list(off.as_array())}")
        lines.append("dh = [")
        for r in chain.rows:
            lines.append(f'  [{_fmt(r.a)}, {_fmt(r.alpha)}, {_fmt(r.d)}, {_fmt(r.theta_offset)}, "{r.kind.value}"],')
        lines.append("]")
        lines.append("limits = [")
        for lo, hi in chain.joint_limits:
            lines.append(f"  [{_fmt(lo)}, {_fmt(hi)}],")
        lines.append("]")
        lines.append("")
    if sys.seeds:
        lines.append("[seed]")
        for key, q in sys.seeds.items():
            lines.append(f"{key} = {_fmt_list(q)}")
    return "\n".join(lines) + "\n"
