import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualcoop import coop
from dualcoop.chain import forward_kinematics, object_jacobian
from dualcoop.geom import Pose, quat_from_rot, rot_of
from dualcoop.ik import (
    RankDeficiencyError,
    RankPolicy,
    SolveOptions,
    alignment_error,
    asym_relative_jacobian,
    check_gain,
    coop_jacobian,
    nullspace_projector,
    pinv,
    relative_jacobian,
    relative_task_twist,
    resolve_per_arm,
    resolve_split,
    secondary_asym_relative,
    secondary_end_effector_1,
    solve_pose,
    solve_priority,
)

STRICT = SolveOptions(rank_policy=RankPolicy.ERROR)


@pytest.fixture
def q(system, rng):
    return system.seed("translational") + 0.05 * rng.standard_normal(system.n_total)


class TestPinv:
    @settings(max_examples=30)
    @given(st.integers(1, 6), st.integers(1, 8), st.integers(0, 2**32 - 1))
    def test_matches_numpy(self, m, n, seed):
        M = np.random.default_rng(seed).standard_normal((m, n))
        np.testing.assert_allclose(pinv(M), np.linalg.pinv(M, rcond=1e-10), atol=1e-9)

    def test_rank_deficient_continue_drops_small_values(self):
        M = np.array([[1.0, 0.0], [0.0, 1e-13]])
        np.testing.assert_allclose(pinv(M), [[1.0, 0.0], [0.0, 0.0]])

    def test_rank_deficient_error_policy(self):
        M = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0]])
        with pytest.raises(RankDeficiencyError, match="smallest retained singular value") as info:
            pinv(M, STRICT)
        assert info.value.rank == 1 and info.value.rows == 2
        assert info.value.smallest_retained == pytest.approx(np.linalg.norm(M))

    def test_damped_formula(self):
        M = np.random.default_rng(3).standard_normal((3, 5))
        lam = 0.1
        expected = M.T @ np.linalg.inv(M @ M.T + lam**2 * np.eye(3))
        np.testing.assert_allclose(pinv(M, SolveOptions(damping=lam)), expected, atol=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            pinv(np.array([[np.nan, 1.0]]))

    @pytest.mark.parametrize("kw", [{"svd_tolerance": 0.0}, {"damping": -1.0}, {"rank_policy": "bogus"}])
    def test_options_validation(self, kw):
        with pytest.raises(ValueError):
            SolveOptions(**kw)

    def test_projector_annihilates_rows(self):
        M = np.random.default_rng(4).standard_normal((6, 14))
        P = nullspace_projector(M)
        np.testing.assert_allclose(M @ P, 0.0, atol=1e-12)
        np.testing.assert_allclose(P @ P, P, atol=1e-12)


class TestJacobians:
    def test_relative_jacobian_structure(self, system, q):
        WJ = object_jacobian(system, q)
        np.testing.assert_allclose(relative_jacobian(system, q), WJ[6:] - WJ[:6], atol=1e-15)
        assert coop_jacobian(system, q, "per_arm").matrix.shape == (12, 14)

    def test_asym_half_is_relative(self, system, q):
        np.testing.assert_allclose(asym_relative_jacobian(system, q, 0.5), relative_jacobian(system, q), atol=1e-15)


class TestSolvers:
    def test_zeta_zero_is_minimum_norm(self, system, q):
        J_r = relative_jacobian(system, q)
        v = np.array([0.1, -0.05, 0.02, 0.01, 0.0, -0.02])
        qd = solve_priority(J_r, v)
        np.testing.assert_allclose(qd, np.linalg.lstsq(J_r, v, rcond=None)[0], atol=1e-12)
        # any other exact solution is at least as long
        other = solve_priority(J_r, v, np.ones(14))
        np.testing.assert_allclose(J_r @ other, v, atol=1e-12)
        assert np.linalg.norm(other) >= np.linalg.norm(qd)

    @pytest.mark.parametrize("alpha", [0.0, 0.2, 0.5, 0.8, 1.0])
    def test_secondary_is_filtered_out_of_relative_task(self, system, q, alpha):
        J_r = relative_jacobian(system, q)
        v = np.array([0.1, -0.05, 0.02, 0.01, 0.03, -0.02])
        zeta = secondary_asym_relative(system, q, v, alpha)
        qd = solve_priority(J_r, v, zeta)
        np.testing.assert_allclose(J_r @ qd, v, atol=1e-9)

    def test_shape_checks(self):
        with pytest.raises(ValueError, match="rows"):
            solve_priority(np.zeros((6, 14)), np.zeros(5))
        with pytest.raises(ValueError, match="zeta"):
            solve_priority(np.eye(6, 14), np.zeros(6), np.zeros(3))

    def test_secondary_end_effector_moves_arm_1_only(self, system, q):
        v1 = np.array([0.01, 0.0, 0.0, 0.0, 0.0, 0.0])
        zeta = secondary_end_effector_1(system, q, v1)
        assert np.all(zeta[7:] == 0.0)
        from dualcoop.chain import geometric_jacobian

        np.testing.assert_allclose(geometric_jacobian(system.left, q[:7]) @ zeta[:7], v1, atol=1e-12)

    def test_per_arm_realizes_symmetric_split(self, system, q):
        v_r = np.array([0.1, -0.05, 0.02, 0.01, 0.03, -0.02])
        qd = resolve_per_arm(system, q, v_r)
        tw = object_jacobian(system, q) @ qd
        np.testing.assert_allclose(tw[:6], -0.5 * v_r, atol=1e-12)
        np.testing.assert_allclose(tw[6:], 0.5 * v_r, atol=1e-12)

    @pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8])
    def test_ects_split_equals_joint_level_pinv(self, system, q, alpha):
        # at full rank, inverting the linking matrix then each arm equals the
        # pseudo-inverse of the full cooperative Jacobian
        v_r = np.array([0.1, -0.05, 0.02, 0.01, 0.03, -0.02])
        cmd = np.concatenate([np.zeros(6), v_r])
        split = resolve_split(system, q, coop.invert_ects(alpha) @ cmd)
        J_E = coop_jacobian(system, q, "ects", alpha).matrix
        np.testing.assert_allclose(split, pinv(J_E) @ cmd, atol=1e-10)

    def test_rank_error_at_singular_configuration(self, system):
        with pytest.raises(RankDeficiencyError):
            resolve_per_arm(system, np.zeros(14), np.ones(6), STRICT)


class TestFeedback:
    def test_gain_validation(self):
        np.testing.assert_array_equal(check_gain(2.0), 2.0 * np.eye(6))
        with pytest.raises(ValueError, match="symmetric"):
            check_gain(np.triu(np.ones((6, 6))))
        with pytest.raises(ValueError, match="positive definite"):
            check_gain(-np.eye(6))
        with pytest.raises(ValueError, match="6x6"):
            check_gain(np.eye(3))

    def test_aligned_frames_give_zero_twist(self):
        p = Pose([0.1, 0.2, 0.3], [0.9, 0.1, 0.2, 0.3])
        np.testing.assert_array_equal(relative_task_twist(p, p), np.zeros(6))

    def test_error_terms(self):
        R = rot_of([0.0, 0.0, 1.0], 0.4)
        o1 = Pose([0.0, 0.0, 0.0])
        o2 = Pose([0.1, 0.0, 0.0], quat_from_rot(R))
        p_err, xi = alignment_error(o1, o2)
        np.testing.assert_allclose(p_err, [0.1, 0.0, 0.0])
        np.testing.assert_allclose(xi, [0.0, 0.0, np.sin(0.2)], atol=1e-15)
        v = relative_task_twist(o1, o2, 2.0)
        np.testing.assert_allclose(v, -2.0 * np.array([0.1, 0, 0, 0, 0, np.sin(0.2)]), atol=1e-15)

    def test_rotation_feedback_is_base_frame(self):
        R1 = rot_of([1.0, 0.0, 0.0], np.pi / 2)
        o1 = Pose([0, 0, 0], quat_from_rot(R1))
        o2 = Pose([0, 0, 0], quat_from_rot(R1 @ rot_of([0.0, 0.0, 1.0], 0.2)))
        v = relative_task_twist(o1, o2)
        # local z of frame 1 is base -y
        np.testing.assert_allclose(v[3:], [0.0, np.sin(0.1), 0.0], atol=1e-15)


def test_solve_pose_reaches_target(system):
    chain, off = system.left, system.object_offsets[0]
    target = Pose([0.4, 0.1, 0.3], quat_from_rot(rot_of([0, 1, 0], 0.1)))
    q, res = solve_pose(chain, target, system.seed("translational")[:7], tool=off)
    got = forward_kinematics(chain, q) @ off
    np.testing.assert_allclose(got.matrix(), target.matrix(), atol=1e-11)
    assert res < 1e-12


def test_solve_pose_unreachable(system):
    with pytest.raises(RuntimeError, match="did not converge"):
        solve_pose(system.left, Pose([5.0, 0.0, 0.0]), np.zeros(7), max_iter=50)
