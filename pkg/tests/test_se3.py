import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm, logm

from njtvreg.se3 import (
    SE3_BASIS,
    SE3_DUAL_BASIS,
    Se3DomainError,
    algebra_matrix,
    euler_from_rigid,
    exp_se3,
    is_rigid,
    log_se3,
    rigid_from_euler,
    transform_from_json,
    transform_to_json,
)

rigid_params = st.tuples(
    *[st.floats(-50, 50) for _ in range(3)],
    *[st.floats(-math.pi / 2, math.pi / 2) for _ in range(3)],
).map(np.array)


def test_basis_norms():
    norms = np.linalg.norm(SE3_BASIS, axis=(1, 2))
    np.testing.assert_allclose(norms[:3], 1.0)
    np.testing.assert_allclose(norms[3:], 1.0 / math.sqrt(2.0))
    np.testing.assert_allclose(np.einsum("kij,lij->kl", SE3_DUAL_BASIS, SE3_BASIS), np.eye(6), atol=1e-15)


class TestExp:
    def test_zero_is_identity(self):
        np.testing.assert_array_equal(exp_se3(np.zeros(6)), np.eye(4))

    def test_pure_translation(self):
        m = exp_se3([5, -2, 3, 0, 0, 0])
        np.testing.assert_allclose(m[:3, :3], np.eye(3))
        np.testing.assert_allclose(m[:3, 3], [5, -2, 3])

    def test_half_angle_rotation(self):
        m = exp_se3([0, 0, 0, math.pi, 0, 0])
        np.testing.assert_allclose(m, expm(algebra_matrix([0, 0, 0, math.pi, 0, 0])), atol=1e-10)
        # pi over the first rotation generator is a quarter turn
        assert math.degrees(math.acos(0.5 * (np.trace(m[:3, :3]) - 1.0))) == pytest.approx(90.0)
        np.testing.assert_allclose(m[:3, 3], 0.0, atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(rigid_params)
    def test_matches_dense_exponential(self, q):
        np.testing.assert_allclose(exp_se3(q), expm(algebra_matrix(q)), atol=1e-9)

    @settings(max_examples=50, deadline=None)
    @given(rigid_params)
    def test_result_is_rigid(self, q):
        r = exp_se3(q)[:3, :3]
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(r.T @ r, np.eye(3), atol=1e-12)

    def test_small_angle_series(self):
        q = np.array([1.0, 2.0, 3.0, 1e-10, -2e-10, 0.0])
        np.testing.assert_allclose(exp_se3(q), expm(algebra_matrix(q)), atol=1e-12)

    def test_composition_is_rigid_but_not_split(self):
        t = np.array([10.0, 0, 0, 0, 0, 0])
        r = np.array([0, 0, 0, 0.5, 0, 0])
        composed = exp_se3(t) @ exp_se3(r)
        assert is_rigid(composed)
        assert not np.allclose(composed, exp_se3(t + r))

    @pytest.mark.parametrize("q", [np.zeros(5), [0, 0, 0, float("nan"), 0, 0], [float("inf")] * 6])
    def test_invalid(self, q):
        with pytest.raises(Se3DomainError):
            exp_se3(q)


class TestLog:
    def test_identity(self):
        np.testing.assert_array_equal(log_se3(np.eye(4)), np.zeros(6))

    @settings(max_examples=100, deadline=None)
    @given(rigid_params)
    def test_round_trip(self, q):
        np.testing.assert_allclose(log_se3(exp_se3(q)), q, atol=1e-9)

    def test_known_rotation_against_dense_logarithm(self):
        m = rigid_from_euler([1, 2, 3], [0, 0, 30])
        q = log_se3(m)
        np.testing.assert_allclose(exp_se3(q), m, atol=1e-9)
        dense = np.real(logm(m))
        np.testing.assert_allclose(q, np.einsum("kij,ij->k", SE3_DUAL_BASIS, dense), atol=1e-9)

    def test_near_identity(self):
        q = np.array([0.1, -0.2, 0.3, 1e-9, 0, -1e-9])
        np.testing.assert_allclose(log_se3(exp_se3(q)), q, atol=1e-12)

    def test_branch_cut(self):
        with pytest.raises(Se3DomainError):
            log_se3(rigid_from_euler([0, 0, 0], [180, 0, 0]))

    @pytest.mark.parametrize(
        "matrix",
        [np.diag([2.0, 1.0, 1.0, 1.0]), np.diag([-1.0, 1.0, 1.0, 1.0]), np.ones((4, 4)), np.eye(3)],
    )
    def test_not_rigid(self, matrix):
        with pytest.raises(Se3DomainError):
            log_se3(matrix)


class TestEuler:
    def test_identity(self):
        t, angles = euler_from_rigid(np.eye(4))
        np.testing.assert_array_equal(t, 0.0)
        np.testing.assert_allclose(angles, 0.0, atol=1e-12)

    def test_single_axis(self):
        t, angles = euler_from_rigid(rigid_from_euler([0, 0, 0], [10, 0, 0]))
        np.testing.assert_allclose(angles, [10, 0, 0], atol=1e-9)

    def test_composed_angles_recovered(self):
        m = rigid_from_euler([4, -5, 6], [5, -10, 15])
        t, angles = euler_from_rigid(m)
        np.testing.assert_allclose(t, [4, -5, 6])
        np.testing.assert_allclose(angles, [5, -10, 15], atol=1e-9)
        np.testing.assert_allclose(rigid_from_euler(t, angles), m, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.tuples(*[st.floats(-15, 15) for _ in range(3)]))
    def test_left_inverse_on_sampled_range(self, angles):
        _, recovered = euler_from_rigid(rigid_from_euler([0, 0, 0], angles))
        np.testing.assert_allclose(recovered, angles, atol=1e-9)

    def test_gimbal_lock_sets_rx_zero(self):
        m = rigid_from_euler([0, 0, 0], [20, 90, 0])
        _, angles = euler_from_rigid(m)
        assert angles[0] == 0.0
        assert angles[1] == pytest.approx(90.0)
        np.testing.assert_allclose(rigid_from_euler([0, 0, 0], angles), m, atol=1e-6)

    def test_not_rigid(self):
        with pytest.raises(Se3DomainError):
            euler_from_rigid(np.diag([1.0, 2.0, 1.0, 1.0]))


def test_json_form():
    q = np.array([1.0, 2.0, 3.0, 0.1, -0.2, 0.3])
    obj = transform_to_json(q)
    assert len(obj["q"]) == 6
    assert len(obj["matrix"]) == 16
    np.testing.assert_allclose(np.reshape(obj["matrix"], (4, 4)), exp_se3(q))
    np.testing.assert_allclose(transform_from_json(obj), q, atol=1e-12)


def test_json_matrix_is_authoritative():
    q = np.array([1.0, 2.0, 3.0, 0.1, -0.2, 0.3])
    obj = {"q": [0.0] * 6, "matrix": exp_se3(q).ravel().tolist()}
    np.testing.assert_allclose(transform_from_json(obj), q, atol=1e-12)
    np.testing.assert_array_equal(transform_from_json({"q": q.tolist()}), q)
