"""Scalar-last quaternion helpers.

Convention: ``q = [q1, q2, q3, q4]`` with ``q4`` the scalar part. ``q``
encodes the Hill -> body rotation, i.e. ``dcm(q) @ v_hill == v_body``.
Products use the ``A(q (x) p) = A(q) A(p)`` ordering.
"""

from __future__ import annotations

import numpy as np

_NORM_TOL_Q = 1e-6
_NORM_TOL_V = 1e-9


def xi_matrix(q) -> np.ndarray:
    q1, q2, q3, q4 = (float(v) for v in q)
    return np.array(
        [
            [q4, -q3, q2],
            [q3, q4, -q1],
            [-q2, q1, q4],
            [-q1, -q2, -q3],
        ]
    )


def omega_matrix(w) -> np.ndarray:
    """4x4 matrix with ``omega_matrix(w) @ q == xi_matrix(q) @ w``."""
    w1, w2, w3 = (float(v) for v in w)
    return np.array(
        [
            [0.0, w3, -w2, w1],
            [-w3, 0.0, w1, w2],
            [w2, -w1, 0.0, w3],
            [-w1, -w2, -w3, 0.0],
        ]
    )


def skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def dcm(q) -> np.ndarray:
    """Hill -> body attitude matrix. Quadratic in ``q``; not renormalized."""
    q = np.asarray(q, dtype=float)
    qv, q4 = q[:3], q[3]
    return (q4 * q4 - qv @ qv) * np.eye(3) + 2.0 * np.outer(qv, qv) - 2.0 * q4 * skew(qv)


def rotate_to_body(q, v_hill) -> np.ndarray:
    return dcm(q) @ np.asarray(v_hill, dtype=float)


def rotate_to_hill(q, v_body) -> np.ndarray:
    """Express a body-frame unit vector in the Hill frame."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v_body, dtype=float)
    if abs(np.linalg.norm(q) - 1.0) > _NORM_TOL_Q:
        raise ValueError(f"quaternion is not unit norm (|q|={np.linalg.norm(q):.9g})")
    if abs(np.linalg.norm(v) - 1.0) > _NORM_TOL_V:
        raise ValueError(f"vector is not unit norm (|v|={np.linalg.norm(v):.12g})")
    return dcm(q).T @ v


def conjugate(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return np.array([-q[0], -q[1], -q[2], q[3]])


def inverse(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return conjugate(q) / (q @ q)


def multiply(q, p) -> np.ndarray:
    """Quaternion product ``q (x) p`` (scalar last)."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    qv, q4 = q[:3], q[3]
    pv, p4 = p[:3], p[3]
    vec = p4 * qv + q4 * pv - np.cross(qv, pv)
    return np.array([vec[0], vec[1], vec[2], q4 * p4 - qv @ pv])


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    return q / np.linalg.norm(q)


def from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    s = np.sin(0.5 * angle)
    return np.array([axis[0] * s, axis[1] * s, axis[2] * s, np.cos(0.5 * angle)])


def cosine_form(body_axis, hill_vec) -> np.ndarray:
    """Symmetric 4x4 ``M`` with ``q @ M @ q == (dcm(q).T @ body_axis) @ hill_vec``.

    ``M`` is linear in ``hill_vec``, which is what lets the barrier code get
    exact derivatives with respect to both ``q`` and the sun angle.
    """
    b = np.asarray(body_axis, dtype=float)
    r = np.asarray(hill_vec, dtype=float)
    br = b @ r
    m = np.empty((4, 4))
    m[:3, :3] = np.outer(b, r) + np.outer(r, b) - br * np.eye(3)
    rxb = np.cross(r, b)
    m[:3, 3] = -rxb
    m[3, :3] = -rxb
    m[3, 3] = br
    return m


def random_unit(rng: np.random.Generator) -> np.ndarray:
    """Uniform sample on the unit 3-sphere."""
    q = rng.standard_normal(4)
    return q / np.linalg.norm(q)
