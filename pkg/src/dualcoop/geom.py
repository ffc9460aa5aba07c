"""Rigid-body geometry primitives.

Conventions used throughout the package:

* vectors are ``numpy`` arrays of shape ``(3,)``;
* quaternions are ``(w, x, y, z)`` arrays of shape ``(4,)``, scalar first;
* twists are ``(6,)`` arrays ``[linear; angular]``;
* everything is expressed in the common base frame unless a function
  says otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

_I3 = np.eye(3)


def skew(a) -> np.ndarray:
    """Return the cross-product matrix ``S(a)`` with ``S(a) @ b == a x b``."""
    x, y, z = np.asarray(a, dtype=float)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# ---------------------------------------------------------------------------
# Quaternions
# ---------------------------------------------------------------------------


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise ValueError(f"cannot normalize quaternion {q!r}")
    return q / n


def quat_conj(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_mul(q1, q2) -> np.ndarray:
    """Hamilton product ``q1 * q2``."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_to_rot(q) -> np.ndarray:
    w, x, y, z = quat_normalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rot(R) -> np.ndarray:
    """Unit quaternion of a rotation matrix, scalar part made nonnegative.

    Shepperd's method: branch on the largest of the four squared
    components so the square root is always well conditioned.
    """
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    diag = (tr, R[0, 0], R[1, 1], R[2, 2])
    k = int(np.argmax(diag))
    if k == 0:
        s = 2.0 * math.sqrt(max(1.0 + tr, 0.0))
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif k == 1:
        s = 2.0 * math.sqrt(max(1.0 + R[0, 0] - R[1, 1] - R[2, 2], 0.0))
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif k == 2:
        s = 2.0 * math.sqrt(max(1.0 + R[1, 1] - R[0, 0] - R[2, 2], 0.0))
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * math.sqrt(max(1.0 + R[2, 2] - R[0, 0] - R[1, 1], 0.0))
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return -q if q[0] < 0.0 else q


def quat_error(q1, q2) -> np.ndarray:
    """Quaternion of ``R1^T R2`` (frame 2 seen from frame 1).

    The result takes the shortest rotation, i.e. its scalar part is
    nonnegative; the vector part is expressed in frame 1.
    """
    q1, q2 = quat_normalize(q1), quat_normalize(q2)
    if np.array_equal(q1, q2) or np.array_equal(q1, -q2):
        # exact zero error, free of product roundoff
        return np.array([1.0, 0.0, 0.0, 0.0])
    qe = quat_normalize(quat_mul(quat_conj(q1), q2))
    if qe[0] < 0.0:
        qe = -qe
    elif qe[0] == 0.0:
        qe = _canonical_sign(qe)
    return qe


def _canonical_sign(q: np.ndarray) -> np.ndarray:
    # half-turn: both signs describe the same rotation
    v = q[1:]
    return -q if v[int(np.argmax(np.abs(v)))] < 0.0 else q


# ---------------------------------------------------------------------------
# Angle-axis
# ---------------------------------------------------------------------------


class AngleAxis(NamedTuple):
    axis: np.ndarray
    angle: float


def angle_axis_of(R) -> AngleAxis:
    """Angle-axis decomposition with ``angle`` in ``[0, pi]``.

    Degenerate cases are resolved deterministically: the identity maps to
    axis ``(1, 0, 0)``, and for a half turn the axis sign is chosen so that
    its largest-magnitude component is positive.
    """
    q = quat_from_rot(R)
    v = q[1:]
    s = np.linalg.norm(v)
    if s < 1e-300:
        return AngleAxis(np.array([1.0, 0.0, 0.0]), 0.0)
    angle = 2.0 * math.atan2(s, q[0])
    axis = v / s
    if angle >= math.pi - 1e-12:
        angle = math.pi
        if axis[int(np.argmax(np.abs(axis)))] < 0.0:
            axis = -axis
    return AngleAxis(axis, angle)


def rot_of(axis, angle: float | None = None) -> np.ndarray:
    """Rodrigues' formula; accepts ``rot_of(AngleAxis)`` or ``rot_of(k, angle)``."""
    if angle is None:
        axis, angle = axis
    k = np.asarray(axis, dtype=float)
    nk = np.linalg.norm(k)
    if abs(nk - 1.0) > 1e-9:
        raise ValueError(f"rotation axis must be unit length, got norm {nk}")
    k = k / nk
    K = skew(k)
    return _I3 + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def quat_of_axis_angle(axis, angle: float) -> np.ndarray:
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    return np.concatenate([[math.cos(0.5 * angle)], math.sin(0.5 * angle) * k])


def rotation_vector(R) -> np.ndarray:
    """``angle * axis`` of ``R``; the matrix logarithm as a 3-vector."""
    aa = angle_axis_of(R)
    return aa.angle * aa.axis


def rotation_angle(R) -> float:
    return angle_axis_of(R).angle


# ---------------------------------------------------------------------------
# Screw transform
# ---------------------------------------------------------------------------


def screw_transform(r) -> np.ndarray:
    """Twist transform along a rigid lever arm ``r = p_object - p_ee``.

    ``W @ [v; w]`` gives the twist at the displaced point:
    the angular part is unchanged and the linear part gains ``w x r``.
    """
    W = np.eye(6)
    W[:3, 3:] = -skew(r)
    return W


# ---------------------------------------------------------------------------
# Poses
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Pose:
    """Position plus unit-quaternion orientation of a frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = np.array(self.position, dtype=float).reshape(3)
        q = quat_normalize(np.array(self.orientation, dtype=float).reshape(4))
        if not np.all(np.isfinite(p)):
            raise ValueError(f"non-finite position {p!r}")
        p.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_rotation(cls, R, position=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(position, dtype=float), quat_from_rot(R))

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls.from_rotation(T[:3, :3], T[:3, 3])

    @property
    def rotation(self) -> np.ndarray:
        return quat_to_rot(self.orientation)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.position
        return T

    def compose(self, other: "Pose") -> "Pose":
        """``self * other``: ``other`` is expressed in this frame."""
        return Pose(
            self.position + self.rotation @ other.position,
            quat_mul(self.orientation, other.orientation),
        )

    __matmul__ = compose

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(-Rt @ self.position, quat_conj(self.orientation))

    def as_array(self) -> np.ndarray:
        """``[x, y, z, qw, qx, qy, qz]``."""
        return np.concatenate([self.position, self.orientation])


def pose_difference(a: Pose, b: Pose) -> np.ndarray:
    """Finite displacement ``a - b`` as a 6-vector in the base frame.

    Linear part is ``p_a - p_b``; angular part is the rotation vector of
    ``R_a R_b^T``. Divided by a time step this is a twist estimate.
    """
    dp = a.position - b.position
    dw = rotation_vector(a.rotation @ b.rotation.T)
    return np.concatenate([dp, dw])
