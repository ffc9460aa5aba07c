"""Cooperative task-space maps for a two-arm system.

Stacked end-effector twists ``v = [v1; v2]`` (12-vectors) are mapped to
absolute/relative task twists by constant *linking* matrices. The
cooperation parameter ``alpha`` in ``[0, 1]`` sets how a relative motion is
split between the arms: under the asymmetric maps arm 1 moves by
``-(1 - alpha) v_r`` and arm 2 by ``alpha v_r``, so 0.5 is the symmetric
split and 0 or 1 is master-slave.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable

import numpy as np

from .geom import Pose, angle_axis_of, quat_from_rot, rot_of

I6 = np.eye(6)
ALPHA_GRID = tuple(round(0.1 * k, 1) for k in range(11))


class LinkKind(str, Enum):
    CTS = "cts"
    ECTS = "ects"
    RELATIVE = "relative"
    ASYM_RELATIVE = "asym_relative"
    ABS_SYMMETRIC = "abs_symmetric"
    ABS_ASYMMETRIC = "abs_asymmetric"


SYMMETRIC_KINDS = frozenset({LinkKind.CTS, LinkKind.RELATIVE, LinkKind.ABS_SYMMETRIC})


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"cooperation parameter alpha must lie in [0, 1], got {alpha}")
    return alpha


def _asym_scale(alpha: float) -> float:
    return (1.0 - alpha) ** 2 + alpha**2


@dataclass(frozen=True, eq=False)
class LinkingMap:
    kind: LinkKind
    alpha: float
    matrix: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


def linking(kind, alpha: float = 0.5) -> LinkingMap:
    """Closed-form linking matrix of the given kind.

    Regenerated on every call; ``alpha`` is ignored by the symmetric kinds.
    """
    kind = LinkKind(kind)
    alpha = check_alpha(alpha)
    if kind is LinkKind.ABS_SYMMETRIC:
        M = np.hstack([0.5 * I6, 0.5 * I6])
    elif kind is LinkKind.ABS_ASYMMETRIC:
        M = np.hstack([alpha * I6, (1.0 - alpha) * I6])
    elif kind is LinkKind.RELATIVE:
        M = np.hstack([-I6, I6])
    elif kind is LinkKind.ASYM_RELATIVE:
        M = np.hstack([-(1.0 - alpha) * I6, alpha * I6]) / _asym_scale(alpha)
    elif kind is LinkKind.CTS:
        M = np.vstack([linking(LinkKind.ABS_SYMMETRIC).matrix, linking(LinkKind.RELATIVE).matrix])
    else:
        M = np.vstack([linking(LinkKind.ABS_ASYMMETRIC, alpha).matrix, linking(LinkKind.RELATIVE).matrix])
    if kind in SYMMETRIC_KINDS:
        alpha = 0.5
    return LinkingMap(kind, alpha, M)


def invert_cts() -> np.ndarray:
    return np.block([[I6, -0.5 * I6], [I6, 0.5 * I6]])


def invert_ects(alpha: float) -> np.ndarray:
    alpha = check_alpha(alpha)
    return np.block([[I6, -(1.0 - alpha) * I6], [I6, alpha * I6]])


def pinv_relative() -> np.ndarray:
    """Moore-Penrose inverse of the relative map: symmetric split."""
    return 0.5 * np.vstack([-I6, I6])


def pinv_asym_relative(alpha: float) -> np.ndarray:
    """Pseudo-inverse of the asymmetric relative map (12 x 6)."""
    alpha = check_alpha(alpha)
    return np.vstack([-(1.0 - alpha) * I6, alpha * I6])


def coupling_rel_from_abs(alpha: float) -> float:
    """Relative twist per unit asymmetric absolute command, ``v_r = c * v_a``."""
    alpha = check_alpha(alpha)
    return (1.0 - 2.0 * alpha) / _asym_scale(alpha)


def induced_abs_from_rel(alpha: float) -> float:
    """Symmetric absolute twist induced per unit asymmetric relative command."""
    alpha = check_alpha(alpha)
    return (2.0 * alpha - 1.0) / 2.0


# ---------------------------------------------------------------------------
# Cooperative frames
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoopFrames:
    absolute: Pose
    relative: Pose
    convention: str
    alpha: float


def cooperative_frames(pose1: Pose, pose2: Pose, convention="cts", alpha: float = 0.5) -> CoopFrames:
    """Absolute and relative frames of a pose pair.

    ``cts``: midpoint position, orientation halfway along the relative
    rotation. ``ects``: weighted position ``alpha p1 + (1 - alpha) p2`` and
    orientation ``R1 R_k((1 - alpha) theta)``. ``asym_relative``: the
    asymmetric relative frame, built from the angle-axis decompositions of
    ``R1`` and ``R2`` taken separately; its absolute frame is the ECTS one,
    which a command in this relative space leaves unchanged.
    """
    convention = LinkKind(convention).value
    if convention not in ("cts", "ects", "asym_relative"):
        raise ValueError(f"unknown frame convention {convention!r}")
    alpha = 0.5 if convention == "cts" else check_alpha(alpha)
    p1, p2 = pose1.position, pose2.position
    R1, R2 = pose1.rotation, pose2.rotation
    R12 = R1.T @ R2
    k12, th12 = angle_axis_of(R12)

    if convention == "cts":
        p_a = 0.5 * (p1 + p2)
        R_a = R1 @ rot_of(k12, 0.5 * th12)
    else:
        p_a = alpha * p1 + (1.0 - alpha) * p2
        R_a = R1 @ rot_of(k12, (1.0 - alpha) * th12)

    if convention == "asym_relative":
        s = _asym_scale(alpha)
        k1, th1 = angle_axis_of(R1)
        k2, th2 = angle_axis_of(R2)
        p_r = (alpha * p2 - (1.0 - alpha) * p1) / s
        R_r = rot_of(k1, (1.0 - alpha) * th1 / s).T @ rot_of(k2, alpha * th2 / s)
    else:
        p_r = p2 - p1
        R_r = R12
    return CoopFrames(Pose(p_a, quat_from_rot(R_a)), Pose(p_r, quat_from_rot(R_r)), convention, alpha)


# ---------------------------------------------------------------------------
# Asymmetry
# ---------------------------------------------------------------------------


def asymmetry_measure(v1, v2) -> float:
    """Share of the motion carried by arm 2: ``|v2| / (|v1| + |v2|)``.

    Returns 0.5 when both twists vanish.
    """
    n1 = float(np.linalg.norm(v1))
    n2 = float(np.linalg.norm(v2))
    total = n1 + n2
    if total == 0.0:
        return 0.5
    return n2 / total


def asymmetry_blocks(v1, v2) -> tuple[float, float]:
    """Asymmetry of the linear and angular parts taken separately."""
    v1, v2 = np.asarray(v1), np.asarray(v2)
    return asymmetry_measure(v1[:3], v2[:3]), asymmetry_measure(v1[3:], v2[3:])


# ---------------------------------------------------------------------------
# Identity suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityResult:
    name: str
    description: str
    max_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.max_error < self.tolerance)


def _flip(M: np.ndarray) -> np.ndarray:
    # fault injection: negate the arm-1 block
    M = np.array(M, copy=True)
    if M.shape[0] == 12:
        M[:6] *= -1.0
    else:
        M[:, :6] *= -1.0
    return M


def _penrose_error(A: np.ndarray, X: np.ndarray) -> float:
    return max(
        np.max(np.abs(A @ X @ A - A)),
        np.max(np.abs(X @ A @ X - X)),
        np.max(np.abs((A @ X).T - A @ X)),
        np.max(np.abs((X @ A).T - X @ A)),
    )


IDENTITY_DESCRIPTIONS = {
    "cts-inverse": "L_cts^-1 = [[I, -I/2], [I, I/2]] and L_cts L_cts^-1 = I",
    "ects-inverse": "L_E(a)^-1 = [[I, -(1-a)I], [I, aI]] and L_E(a) L_E(a)^-1 = I",
    "relative-pinv": "L_r^+ = 1/2 [-I; I] satisfies the Penrose conditions",
    "asym-relative-pinv": "pinv(Lr(a)) = [-(1-a)I; aI]",
    "abs-to-rel-coupling": "L_r pinv(La(a)) = (1-2a)/(a^2+(1-a)^2) I",
    "asym-absolute-invariance": "La(a) pinv(Lr(a)) = 0",
    "generalized-inverse": "L_r pinv(Lr(a)) = I",
    "homogeneous-completion": "L_r^+ v + (I - L_r^+ L_r) pinv(Lr(a)) v = pinv(Lr(a)) v",
    "induced-absolute": "L_a pinv(Lr(a)) = (2a-1)/2 I",
    "symmetric-orthogonality": "L_r pinv(L_a) = 0",
    "task-level-asymmetry": "asymmetry of pinv(Lr(a)) v equals a",
}


def identity_suite(
    alphas: Iterable[float] = ALPHA_GRID,
    n_random: int = 1000,
    seed: int = 0,
    tolerance: float = 1e-12,
    faults: Iterable[str] = (),
) -> list[IdentityResult]:
    """Check the linking-matrix identities over an alpha grid.

    ``faults`` names identities whose operand is deliberately corrupted;
    it exists so the checker itself can be tested.
    """
    alphas = [check_alpha(a) for a in alphas]
    faults = set(faults)
    unknown = faults - set(IDENTITY_DESCRIPTIONS)
    if unknown:
        raise ValueError(f"unknown identities {sorted(unknown)}")
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((6, n_random))
    I12 = np.eye(12)

    def op(name: str, M: np.ndarray) -> np.ndarray:
        return _flip(M) if name in faults else M

    L_r = linking("relative").matrix
    L_a = linking("abs_symmetric").matrix
    L_cts = linking("cts").matrix
    Lr_pinv = pinv_relative()

    def cts_inverse():
        X = op("cts-inverse", invert_cts())
        return max(np.max(np.abs(L_cts @ X - I12)), np.max(np.abs(X @ L_cts - I12)))

    def ects_inverse():
        errs = []
        for a in alphas:
            X = op("ects-inverse", invert_ects(a))
            L = linking("ects", a).matrix
            errs.append(max(np.max(np.abs(L @ X - I12)), np.max(np.abs(X @ L - I12))))
        return max(errs)

    def relative_pinv():
        X = op("relative-pinv", Lr_pinv)
        return max(_penrose_error(L_r, X), np.max(np.abs(L_r @ X - I6)))

    def asym_relative_pinv():
        errs = []
        for a in alphas:
            X = op("asym-relative-pinv", pinv_asym_relative(a))
            errs.append(_penrose_error(linking("asym_relative", a).matrix, X))
        return max(errs)

    def abs_to_rel_coupling():
        errs = []
        for a in alphas:
            La = linking("abs_asymmetric", a).matrix
            # closed-form right inverse of a full-row-rank map
            La_pinv = op("abs-to-rel-coupling", La.T / _asym_scale(a))
            errs.append(np.max(np.abs(L_r @ La_pinv - coupling_rel_from_abs(a) * I6)))
        return max(errs)

    def asym_absolute_invariance():
        errs = []
        for a in alphas:
            X = op("asym-absolute-invariance", pinv_asym_relative(a))
            errs.append(np.max(np.abs(linking("abs_asymmetric", a).matrix @ X)))
        return max(errs)

    def generalized_inverse():
        errs = []
        for a in alphas:
            X = op("generalized-inverse", pinv_asym_relative(a))
            errs.append(np.max(np.abs(L_r @ X - I6)))
        return max(errs)

    def homogeneous_completion():
        errs = []
        P = I12 - Lr_pinv @ L_r
        for a in alphas:
            X = op("homogeneous-completion", pinv_asym_relative(a))
            lhs = Lr_pinv @ V + P @ (X @ V)
            errs.append(np.max(np.abs(lhs - pinv_asym_relative(a) @ V)))
        return max(errs)

    def induced_absolute():
        errs = []
        for a in alphas:
            X = op("induced-absolute", pinv_asym_relative(a))
            errs.append(np.max(np.abs(L_a @ X - induced_abs_from_rel(a) * I6)))
        return max(errs)

    def symmetric_orthogonality():
        La_pinv = op("symmetric-orthogonality", np.vstack([I6, I6]))
        return max(np.max(np.abs(L_r @ La_pinv)), np.max(np.abs(L_a @ La_pinv - I6)))

    def task_level_asymmetry():
        errs = []
        for a in alphas:
            X = pinv_asym_relative(a)
            if "task-level-asymmetry" in faults:
                # a sign flip leaves norms unchanged; swap the arm blocks instead
                X = np.vstack([X[6:], X[:6]])
            split = X @ V
            for k in range(V.shape[1]):
                errs.append(abs(asymmetry_measure(split[:6, k], split[6:, k]) - a))
        return max(errs)

    checks = {
        "cts-inverse": cts_inverse,
        "ects-inverse": ects_inverse,
        "relative-pinv": relative_pinv,
        "asym-relative-pinv": asym_relative_pinv,
        "abs-to-rel-coupling": abs_to_rel_coupling,
        "asym-absolute-invariance": asym_absolute_invariance,
        "generalized-inverse": generalized_inverse,
        "homogeneous-completion": homogeneous_completion,
        "induced-absolute": induced_absolute,
        "symmetric-orthogonality": symmetric_orthogonality,
        "task-level-asymmetry": task_level_asymmetry,
    }
    return [
        IdentityResult(name, IDENTITY_DESCRIPTIONS[name], float(fn()), tolerance) for name, fn in checks.items()
    ]
