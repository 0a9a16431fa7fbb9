"""Rotation-vector utilities (Rodrigues map and its inverse).

Rotations are parametrized by rotation vectors theta = angle * axis.  All
routines broadcast over leading dimensions so batches of rotations can be
built in one call.
"""

import numpy as np

_SMALL_ANGLE = 1e-8


def skew(v):
    """Cross-product matrix [v]x such that skew(v) @ w = v x w.

    Parameters
    ----------
    v : array (..., 3)

    Returns
    -------
    array (..., 3, 3)
    """
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def rotation_matrix(theta):
    """Rodrigues map: rotation vector -> orthonormal rotation matrix.

    Uses the series expansion of sin(t)/t and (1-cos(t))/t^2 below a small
    angle threshold so the map is smooth through theta = 0.

    Parameters
    ----------
    theta : array (..., 3)
        Rotation vector(s), angle in radians times unit axis.

    Returns
    -------
    array (..., 3, 3)
    """
    theta = np.asarray(theta, dtype=float)
    angle = np.linalg.norm(theta, axis=-1)
    k = skew(theta)
    k2 = k @ k

    a2 = angle * angle
    small = angle < _SMALL_ANGLE
    with np.errstate(invalid="ignore", divide="ignore"):
        c1 = np.where(small, 1.0 - a2 / 6.0, np.sin(angle) / np.where(small, 1.0, angle))
        c2 = np.where(small, 0.5 - a2 / 24.0, (1.0 - np.cos(angle)) / np.where(small, 1.0, a2))
    eye = np.broadcast_to(np.eye(3), k.shape)
    return eye + c1[..., None, None] * k + c2[..., None, None] * k2


def rotation_vector(R):
    """Inverse Rodrigues map: rotation matrix -> rotation vector.

    Stable for small angles (series) and near pi (axis from the symmetric
    part).  Batches are vectorized except for the rare near-pi entries,
    which fall back to the scalar routine row by row.
    """
    R = np.asarray(R, dtype=float)
    if R.ndim == 2:
        return _rotation_vector_single(R)
    flat = R.reshape(-1, 3, 3)
    tr = np.clip((flat[:, 0, 0] + flat[:, 1, 1] + flat[:, 2, 2] - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(tr)
    w = np.stack(
        [
            flat[:, 2, 1] - flat[:, 1, 2],
            flat[:, 0, 2] - flat[:, 2, 0],
            flat[:, 1, 0] - flat[:, 0, 1],
        ],
        axis=1,
    )
    small = angle < _SMALL_ANGLE
    near_pi = np.pi - angle <= 1e-6
    sin = np.where(small | near_pi, 1.0, np.sin(angle))
    fac = np.where(small, 0.5 * (1.0 + angle * angle / 6.0), 0.5 * angle / sin)
    out = fac[:, None] * w
    for i in np.nonzero(near_pi)[0]:
        out[i] = _rotation_vector_single(flat[i])
    return out.reshape(R.shape[:-2] + (3,))


def _rotation_vector_single(R):
    trace = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    angle = np.arccos(trace)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if angle < _SMALL_ANGLE:
        # R ~ I + skew(theta): the antisymmetric part is 2*theta
        return 0.5 * w * (1.0 + angle * angle / 6.0)
    if np.pi - angle > 1e-6:
        return (0.5 * angle / np.sin(angle)) * w
    # near pi: axis from the dominant column of R + I
    B = R + np.eye(3)
    col = B[:, np.argmax(np.diag(B))]
    axis = col / np.linalg.norm(col)
    # fix sign with the antisymmetric part (may vanish exactly at pi)
    if np.dot(axis, w) < 0.0:
        axis = -axis
    return angle * axis


def compose_rotation(delta, theta):
    """Return the rotation vector of R(delta) @ R(theta).

    Used by time steppers to apply an incremental rotation ``delta`` on top
    of an accumulated rotation ``theta``.
    """
    return rotation_vector(rotation_matrix(delta) @ rotation_matrix(theta))


def rotation_between_batch(a, b):
    """Minimal rotations taking unit vectors a[k] onto b[k], shape (m, 3, 3).

    Anti-parallel rows (no unique minimal rotation) fall back to the
    scalar routine's convention.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.einsum("ij,ij->i", a, b)
    axis = np.cross(a, b)
    s2 = np.einsum("ij,ij->i", axis, axis)
    ok = s2 >= 1e-30
    K = skew(axis)
    fac = np.where(ok, (1.0 - c) / np.where(ok, s2, 1.0), 0.0)
    out = np.broadcast_to(np.eye(3), K.shape) + K + (K @ K) * fac[:, None, None]
    for i in np.nonzero(~ok & (c < 0.0))[0]:
        out[i] = rotation_between(a[i], b[i])
    return out


def rotation_between(a, b):
    """Minimal rotation matrix taking unit vector a onto unit vector b."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = float(np.dot(a, b))
    axis = np.cross(a, b)
    s2 = float(np.dot(axis, axis))
    if s2 < 1e-30:
        if c > 0.0:
            return np.eye(3)
        # a and b anti-parallel: rotate by pi about any perpendicular axis
        perp = np.cross(a, [1.0, 0.0, 0.0])
        if np.dot(perp, perp) < 1e-12:
            perp = np.cross(a, [0.0, 1.0, 0.0])
        perp /= np.linalg.norm(perp)
        return rotation_matrix(np.pi * perp)
    K = skew(axis)
    return np.eye(3) + K + K @ K * ((1.0 - c) / s2)
