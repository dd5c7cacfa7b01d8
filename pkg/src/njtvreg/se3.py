"""Rigid transforms encoded as 6-vectors in the se(3) Lie algebra.

q[0:3] are translation coordinates (mm) and q[3:6] rotation coordinates over the basis below.
The rotation generators carry a factor 1/2, so they have Frobenius norm 1/sqrt(2) and the
effective rotation angle is half the norm of the rotation coordinates. The exponential uses this
basis as-is; the logarithm projects on the dual basis so that the two maps are exact inverses.
"""

import math

import numpy as np
from scipy.spatial.transform import Rotation


class Se3DomainError(ValueError):
    """Raised for matrices outside the domain of the logarithm or the Euler decomposition."""


def _basis() -> np.ndarray:
    b = np.zeros((6, 4, 4))
    b[0, 0, 3] = b[1, 1, 3] = b[2, 2, 3] = 1.0
    b[3, 0, 1], b[3, 1, 0] = 0.5, -0.5
    b[4, 0, 2], b[4, 2, 0] = 0.5, -0.5
    b[5, 1, 2], b[5, 2, 1] = 0.5, -0.5
    b.setflags(write=False)
    return b


SE3_BASIS = _basis()
SE3_DUAL_BASIS = SE3_BASIS / np.einsum("kij,kij->k", SE3_BASIS, SE3_BASIS)[:, None, None]

_SMALL_ANGLE = 1e-8


def _skew(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def rotation_vector(q) -> np.ndarray:
    """Axis-angle vector of the rotation part of ``q`` (angle = its norm, radians)."""
    q = np.asarray(q, dtype=np.float64)
    return 0.5 * np.array([-q[5], q[4], -q[3]])


def algebra_matrix(q) -> np.ndarray:
    """The 4x4 algebra element sum_i q_i B_i."""
    return np.einsum("k,kij->ij", np.asarray(q, dtype=np.float64), SE3_BASIS)


def exp_se3(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (6,) or not np.all(np.isfinite(q)):
        raise Se3DomainError(f"Rigid parameters must be 6 finite numbers, got {q}")
    w = rotation_vector(q)
    theta = float(np.linalg.norm(w))
    wx = _skew(w)
    wx2 = wx @ wx
    if theta < _SMALL_ANGLE:
        a = 1.0 - theta**2 / 6.0
        b = 0.5 - theta**2 / 24.0
        c = 1.0 / 6.0 - theta**2 / 120.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta**2
        c = (theta - math.sin(theta)) / theta**3
    out = np.eye(4)
    out[:3, :3] = np.eye(3) + a * wx + b * wx2
    out[:3, 3] = (np.eye(3) + b * wx + c * wx2) @ q[:3]
    return out


def is_rigid(matrix, *, atol: float = 1e-6) -> bool:
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (4, 4) or not np.all(np.isfinite(m)):
        return False
    r = m[:3, :3]
    return (
        np.allclose(m[3], [0.0, 0.0, 0.0, 1.0], atol=0.0)
        and np.allclose(r.T @ r, np.eye(3), atol=atol)
        and np.linalg.det(r) > 0.0
    )


def _check_rigid(matrix) -> np.ndarray:
    m = np.asarray(matrix, dtype=np.float64)
    if not is_rigid(m):
        raise Se3DomainError(f"Not a rigid transform:\n{m}")
    return m


def log_se3(matrix) -> np.ndarray:
    m = _check_rigid(matrix)
    r = m[:3, :3]
    s = 0.5 * np.array([r[2, 1] - r[1, 2], r[0, 2] - r[2, 0], r[1, 0] - r[0, 1]])
    sin_theta = float(np.linalg.norm(s))
    cos_theta = 0.5 * (np.trace(r) - 1.0)
    theta = math.atan2(sin_theta, cos_theta)
    if theta > math.pi - 1e-6:
        raise Se3DomainError(f"Rotation angle {math.degrees(theta):.4f} deg is at the branch cut (pi)")
    if theta < _SMALL_ANGLE:
        w = (1.0 + theta**2 / 6.0) * s
        v_inv_coeff = 1.0 / 12.0
    else:
        w = theta / sin_theta * s
        v_inv_coeff = (1.0 - theta * math.sin(theta) / (2.0 * (1.0 - math.cos(theta)))) / theta**2
    wx = _skew(w)
    v_inv = np.eye(3) - 0.5 * wx + v_inv_coeff * (wx @ wx)
    log_m = np.zeros((4, 4))
    log_m[:3, :3] = wx
    log_m[:3, 3] = v_inv @ m[:3, 3]
    return np.einsum("kij,ij->k", SE3_DUAL_BASIS, log_m)


def rigid_from_euler(translation, angles_deg) -> np.ndarray:
    """Rigid matrix from a translation (mm) and extrinsic x-y-z Euler angles (degrees)."""
    out = np.eye(4)
    out[:3, :3] = Rotation.from_euler("xyz", np.asarray(angles_deg, dtype=np.float64), degrees=True).as_matrix()
    out[:3, 3] = translation
    return out


def euler_from_rigid(matrix) -> tuple[np.ndarray, np.ndarray]:
    """Translation (mm) and extrinsic x-y-z Euler angles (degrees), R = Rz @ Ry @ Rx.

    At gimbal lock (|ry| = 90 deg) rx is set to zero.
    """
    m = _check_rigid(matrix)
    r = m[:3, :3]
    cos_ry = math.hypot(r[0, 0], r[1, 0])
    ry = math.atan2(-r[2, 0], cos_ry)
    if cos_ry < 1e-12:
        rx = 0.0
        rz = math.atan2(-r[0, 1], r[1, 1])
    else:
        rx = math.atan2(r[2, 1], r[2, 2])
        rz = math.atan2(r[1, 0], r[0, 0])
    return m[:3, 3].copy(), np.degrees([rx, ry, rz])


def transform_to_json(q) -> dict:
    q = np.asarray(q, dtype=np.float64)
    return {"q": q.tolist(), "matrix": exp_se3(q).ravel().tolist()}


def transform_from_json(obj: dict) -> np.ndarray:
    """Parameters from the JSON form; the matrix is authoritative when present."""
    if "matrix" in obj:
        return log_se3(np.asarray(obj["matrix"], dtype=np.float64).reshape(4, 4))
    return np.asarray(obj["q"], dtype=np.float64)
