"""Differential inverse kinematics for the two-arm chain.

Joint velocities ``qdot = [qdot_1; qdot_2]`` are resolved from a relative
twist ``v_r`` with pseudo-inverses and one level of nullspace priority::

    qdot = J_r^+ v_r + (I - J_r^+ J_r) zeta

All twists live in the base frame and refer to the object frames, i.e.
joint Jacobians are ``L @ W @ J`` with ``W`` the stacked screw transform.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import coop
from .chain import DualArmSystem, block_jacobian, geometric_jacobian, stacked_screw
from .coop import check_alpha, linking
from .geom import Pose, quat_error, rotation_vector, screw_transform


class RankDeficiencyError(np.linalg.LinAlgError):
    """Raised when a Jacobian loses rank and the solve policy forbids it."""

    def __init__(self, message: str, rank: int, rows: int, smallest_retained: float):
        super().__init__(message)
        self.rank = rank
        self.rows = rows
        self.smallest_retained = smallest_retained


class RankPolicy(str, Enum):
    ERROR = "error_on_deficient"
    CONTINUE = "damped_continue"


@dataclass(frozen=True)
class SolveOptions:
    svd_tolerance: float = 1e-10
    damping: float = 0.0
    rank_policy: RankPolicy = RankPolicy.CONTINUE

    def __post_init__(self):
        object.__setattr__(self, "rank_policy", RankPolicy(self.rank_policy))
        if not (0.0 < self.svd_tolerance < 1.0):
            raise ValueError(f"svd_tolerance must lie in (0, 1), got {self.svd_tolerance}")
        if not (np.isfinite(self.damping) and self.damping >= 0.0):
            raise ValueError(f"damping must be finite and >= 0, got {self.damping}")


DEFAULT_OPTIONS = SolveOptions()


def pinv(M, opts: SolveOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """SVD pseudo-inverse, optionally damped.

    Singular values below ``svd_tolerance * sigma_max`` are discarded. With
    ``damping = lam > 0`` the result is ``M^T (M M^T + lam^2 I)^-1``.
    """
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("pinv: matrix has non-finite entries")
    rows, cols = M.shape
    if M.size == 0:
        return np.zeros((cols, rows))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    cutoff = opts.svd_tolerance * (s[0] if s.size else 0.0)
    keep = s > cutoff
    rank = int(np.count_nonzero(keep))
    if opts.rank_policy is RankPolicy.ERROR and rank < rows:
        smallest = float(s[keep][-1]) if rank else 0.0
        raise RankDeficiencyError(
            f"matrix of {rows} rows has numerical rank {rank}; smallest retained singular value {smallest:.3e}",
            rank,
            rows,
            smallest,
        )
    if opts.damping > 0.0:
        inv_s = s / (s * s + opts.damping**2)
    else:
        inv_s = np.zeros_like(s)
        inv_s[keep] = 1.0 / s[keep]
    return (Vt.T * inv_s) @ U.T


def nullspace_projector(M, opts: SolveOptions = DEFAULT_OPTIONS) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    return np.eye(M.shape[1]) - pinv(M, opts) @ M


# ---------------------------------------------------------------------------
# Joint Jacobians
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoopJacobian:
    kind: str
    alpha: float
    matrix: np.ndarray


def coop_jacobian(sys: DualArmSystem, q, kind="relative", alpha: float = 0.5) -> CoopJacobian:
    """``L @ W @ J`` at ``q`` for a linking ``kind``.

    ``kind="per_arm"`` returns ``W @ J`` (12 x 2n), the object-frame twists
    of both arms without any cooperative mixing.
    """
    alpha = check_alpha(alpha)
    WJ = stacked_screw(sys, q) @ block_jacobian(sys, q)
    if kind == "per_arm":
        return CoopJacobian("per_arm", alpha, WJ)
    L = linking(kind, alpha)
    return CoopJacobian(L.kind.value, L.alpha, L.matrix @ WJ)


def relative_jacobian(sys: DualArmSystem, q) -> np.ndarray:
    return coop_jacobian(sys, q, "relative").matrix


def asym_relative_jacobian(sys: DualArmSystem, q, alpha: float) -> np.ndarray:
    return coop_jacobian(sys, q, "asym_relative", alpha).matrix


# ---------------------------------------------------------------------------
# Solvers
# ---------------------------------------------------------------------------


def solve_priority(J_primary, v_primary, zeta=None, opts: SolveOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """``J^+ v + (I - J^+ J) zeta``; ``zeta=None`` gives the minimum-norm solution."""
    J = np.asarray(J_primary, dtype=float)
    v = np.asarray(v_primary, dtype=float)
    if J.shape[0] != v.shape[0]:
        raise ValueError(f"task has {J.shape[0]} rows but command has {v.shape[0]} entries")
    J_pinv = pinv(J, opts)
    qdot = J_pinv @ v
    if zeta is not None:
        zeta = np.asarray(zeta, dtype=float)
        if zeta.shape != (J.shape[1],):
            raise ValueError(f"zeta must have length {J.shape[1]}, got shape {zeta.shape}")
        qdot = qdot + (zeta - J_pinv @ (J @ zeta))
    return qdot


def secondary_end_effector_1(sys: DualArmSystem, q, v1_desired, opts: SolveOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Joint rates realizing a tool twist on arm 1 only; arm-2 entries are zero."""
    q1, _ = sys.split(q)
    J1 = geometric_jacobian(sys.left, q1)
    zeta = np.zeros(sys.n_total)
    zeta[: sys.left.n] = pinv(J1, opts) @ np.asarray(v1_desired, dtype=float)
    return zeta


def secondary_asym_relative(sys: DualArmSystem, q, v_r, alpha: float, opts: SolveOptions = DEFAULT_OPTIONS) -> np.ndarray:
    return pinv(asym_relative_jacobian(sys, q, alpha), opts) @ np.asarray(v_r, dtype=float)


def resolve_per_arm(
    sys: DualArmSystem, q, v_r, opts: SolveOptions = DEFAULT_OPTIONS, use_screw: bool = True
) -> np.ndarray:
    """Split ``v_r`` symmetrically, then solve each arm on its own.

    With ``use_screw`` the split twists are object-frame twists and each arm
    inverts ``W_i J_i``; without it they are applied at the tool frames.
    """
    v = coop.pinv_relative() @ np.asarray(v_r, dtype=float)
    return resolve_split(sys, q, v, opts, use_screw)


def resolve_split(
    sys: DualArmSystem, q, v_split, opts: SolveOptions = DEFAULT_OPTIONS, use_screw: bool = True
) -> np.ndarray:
    """Per-arm IK of a stacked 12-vector of twists."""
    q1, q2 = sys.split(q)
    W = stacked_screw(sys, q) if use_screw else np.eye(12)
    out = []
    for k, (chain, qi) in enumerate(zip(sys.arms, (q1, q2))):
        Ji = W[6 * k : 6 * k + 6, 6 * k : 6 * k + 6] @ geometric_jacobian(chain, qi)
        out.append(pinv(Ji, opts) @ v_split[6 * k : 6 * k + 6])
    return np.concatenate(out)


# ---------------------------------------------------------------------------
# Relative alignment task
# ---------------------------------------------------------------------------


def check_gain(Kp) -> np.ndarray:
    Kp = np.asarray(Kp, dtype=float)
    if Kp.ndim == 0:
        Kp = float(Kp) * np.eye(6)
    if Kp.shape != (6, 6):
        raise ValueError(f"gain must be 6x6, got shape {Kp.shape}")
    if not np.allclose(Kp, Kp.T, atol=1e-12):
        raise ValueError("gain must be symmetric")
    if np.min(np.linalg.eigvalsh(Kp)) <= 0.0:
        raise ValueError("gain must be positive definite")
    return Kp


def alignment_error(pose_o1: Pose, pose_o2: Pose) -> tuple[np.ndarray, np.ndarray]:
    """Position error ``p_o2 - p_o1`` and vector part of the error quaternion."""
    p_err = pose_o2.position - pose_o1.position
    xi = quat_error(pose_o1.orientation, pose_o2.orientation)[1:]
    return p_err, xi


def relative_task_twist(pose_o1: Pose, pose_o2: Pose, Kp=None) -> np.ndarray:
    """Feedback relative twist ``-Kp [p_err; R_o1 xi]`` aligning ``{h_o2}`` to ``{h_o1}``."""
    Kp = np.eye(6) if Kp is None else check_gain(Kp)
    p_err, xi = alignment_error(pose_o1, pose_o2)
    return -Kp @ np.concatenate([p_err, pose_o1.rotation @ xi])


# ---------------------------------------------------------------------------
# Positional IK, used to build initial configurations
# ---------------------------------------------------------------------------


def solve_pose(chain, target: Pose, q0, tool: Pose | None = None, tol: float = 1e-12, max_iter: int = 500, damping: float = 1e-3):
    """Damped Newton iterations driving ``FK(q) @ tool`` onto ``target``.

    Returns ``(q, residual)``; raises ``RuntimeError`` if it does not converge.
    """
    from .chain import forward_kinematics

    tool = Pose() if tool is None else tool
    q = np.array(q0, dtype=float)
    opts = SolveOptions(damping=damping)
    err = np.inf
    for _ in range(max_iter):
        ee = forward_kinematics(chain, q)
        cur = ee @ tool
        e = np.concatenate([target.position - cur.position, rotation_vector(target.rotation @ cur.rotation.T)])
        err = float(np.max(np.abs(e)))
        if err < tol:
            return q, err
        J = screw_transform(ee.rotation @ tool.position) @ geometric_jacobian(chain, q)
        step = pinv(J, opts if err > 1e-6 else DEFAULT_OPTIONS) @ e
        scale = min(1.0, 0.5 / max(np.max(np.abs(step)), 1e-300))
        q = q + scale * step
    raise RuntimeError(f"pose IK did not converge (residual {err:.3e})")
