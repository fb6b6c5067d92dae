"""Small SO(3) helpers shared by the dynamics and the attitude controller.

Conventions: rotation matrices map body-frame vectors into the world frame,
quaternions are stored [w, x, y, z] with w >= 0.
"""

from __future__ import annotations

import numpy as np


def skew(w):
    """Skew-symmetric matrix S(w) such that S(w) @ x == cross(w, x)."""
    wx, wy, wz = w
    return np.array([
        [0.0, -wz, wy],
        [wz, 0.0, -wx],
        [-wy, wx, 0.0],
    ])


def vee(M):
    """Inverse of skew(): extract w from a skew-symmetric matrix."""
    return np.array([M[2, 1], M[0, 2], M[1, 0]])


def project_rotation(R):
    """Nearest rotation matrix in the Frobenius sense (polar projection)."""
    U, _, Vt = np.linalg.svd(R)
    P = U @ Vt
    if np.linalg.det(P) < 0.0:
        # flip the axis with the smallest singular value
        U = U.copy()
        U[:, -1] = -U[:, -1]
        P = U @ Vt
    return P


_EYE3 = np.eye(3)


def project_rotation_fast(R):
    """Polar projection via one Newton correction for nearly-orthonormal R.

    R(I - E/2 + 3E^2/8) with E = R^T R - I converges quadratically to the
    polar factor; one application of it keeps the per-step integration drift
    far below the 1e-9 orthonormality budget.  Falls back to the SVD route
    when R has drifted too far.
    """
    E = R.T @ R - _EYE3
    scale = np.abs(E).max()
    if scale > 1e-4:
        return project_rotation(R)
    if scale == 0.0:
        return R
    return R @ (_EYE3 - 0.5 * E + 0.375 * (E @ E))


def quat_from_rotation(R):
    """Rotation matrix -> unit quaternion [w, x, y, z], w >= 0."""
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s,
                      0.25 * s,
                      (R[0, 1] + R[1, 0]) / s,
                      (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s,
                      (R[0, 1] + R[1, 0]) / s,
                      0.25 * s,
                      (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s,
                      (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s,
                      0.25 * s])
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def rotation_from_quat(q):
    """Unit quaternion [w, x, y, z] -> rotation matrix."""
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotation_about(axis, angle):
    """Rodrigues rotation about a unit axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    K = skew(axis)
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)
