import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attitude_rta import quaternion as quat

unit_q = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.asarray(v) / np.linalg.norm(v))
unit_v = st.lists(st.floats(-1, 1), min_size=3, max_size=3).filter(
    lambda v: np.linalg.norm(v) > 1e-3).map(lambda v: np.asarray(v) / np.linalg.norm(v))


def test_xi_identity():
    np.testing.assert_array_equal(quat.xi_matrix([0, 0, 0, 1]),
                                  [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 0]])


def test_xi_basis():
    np.testing.assert_array_equal(quat.xi_matrix([1, 0, 0, 0]),
                                  [[0, 0, 0], [0, 0, -1], [0, 1, 0], [-1, 0, 0]])


def test_xi_orthogonal_to_q(rng):
    for _ in range(100):
        q = quat.random_unit(rng)
        np.testing.assert_allclose(quat.xi_matrix(q).T @ q, 0.0, atol=1e-15)


def test_omega_matrix_matches_xi(rng):
    q, w = quat.random_unit(rng), rng.normal(size=3)
    np.testing.assert_allclose(quat.omega_matrix(w) @ q, quat.xi_matrix(q) @ w, atol=1e-15)


def test_rotate_identity():
    np.testing.assert_array_equal(quat.rotate_to_hill([0, 0, 0, 1], [1, 0, 0]), [1, 0, 0])


def _rodrigues(axis, angle):
    # independent construction: body->Hill rotation by +angle about axis
    k = quat.skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * k @ k


def test_rotate_quarter_turn_golden():
    q = quat.from_axis_angle([0, 0, 1], math.pi / 2)
    out = quat.rotate_to_hill(q, [1, 0, 0])
    # golden: body x-axis seen from Hill after +90 deg about z is +y
    np.testing.assert_allclose(out, [0, 1, 0], atol=1e-15)
    np.testing.assert_allclose(out, _rodrigues([0, 0, 1], math.pi / 2) @ [1, 0, 0], atol=1e-15)


def test_dcm_against_rodrigues(rng):
    for _ in range(50):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        ang = rng.uniform(-math.pi, math.pi)
        q = quat.from_axis_angle(axis, ang)
        np.testing.assert_allclose(quat.dcm(q).T, _rodrigues(axis, ang), atol=1e-13)


@given(unit_q, unit_v)
def test_rotation_preserves_norm(q, v):
    assert abs(np.linalg.norm(quat.rotate_to_hill(q, v)) - 1.0) < 1e-12


def test_rotate_rejects_non_unit():
    with pytest.raises(ValueError):
        quat.rotate_to_hill([0, 0, 0, 2.0], [1, 0, 0])
    with pytest.raises(ValueError):
        quat.rotate_to_hill([0, 0, 0, 1.0], [2.0, 0, 0])


@given(unit_q, unit_q)
@settings(max_examples=50)
def test_product_composes_rotations(q, r):
    np.testing.assert_allclose(quat.dcm(quat.multiply(q, r)), quat.dcm(q) @ quat.dcm(r), atol=1e-12)
    assert abs(np.linalg.norm(quat.multiply(q, r)) - 1.0) < 1e-12


@given(unit_q)
@settings(max_examples=50)
def test_inverse(q):
    np.testing.assert_allclose(quat.multiply(q, quat.inverse(q)), [0, 0, 0, 1], atol=1e-12)


def test_cosine_form(rng):
    for _ in range(50):
        q = quat.random_unit(rng)
        b = rng.normal(size=3)
        r = rng.normal(size=3)
        m = quat.cosine_form(b, r)
        np.testing.assert_allclose(m, m.T)
        assert q @ m @ q == pytest.approx(float((quat.dcm(q).T @ b) @ r), abs=1e-12)
