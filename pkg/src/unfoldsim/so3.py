"""Rotation-group primitives on 3x3 matrices and axis-angle vectors.

Functions take and return plain ``ndarray`` (3x3 matrices, 3-vectors); wrap
in :class:`unfoldsim.geometry.Rotation` where validation is wanted.  The
inner product on tangent vectors is the plain Euclidean one on axis-angle
coefficients.
"""

import numpy as np

from .errors import NearZeroTime

_SMALL_ANGLE = 1e-6
# below this distance to pi the axis is read off the symmetric part
_NEAR_PI = 1e-4


def hat(omega):
    """Skew-symmetric matrix of a 3-vector."""
    x, y, z = omega
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(m):
    return np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]]) / 2.0


def exp_map(omega) -> np.ndarray:
    """Rodrigues formula ``I + a K + b K^2``."""
    omega = np.asarray(omega, dtype=float)
    theta2 = float(omega @ omega)
    theta = np.sqrt(theta2)
    if theta < _SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = np.sin(theta) / theta
        b = (1.0 - np.cos(theta)) / theta2
    k = hat(omega)
    return np.eye(3) + a * k + b * (k @ k)


def rotation_angle(r) -> float:
    r = np.asarray(r, dtype=float)
    s = np.linalg.norm(vee(r))
    c = (np.trace(r) - 1.0) / 2.0
    return float(np.arctan2(s, c))


def _canonical_sign(axis):
    for v in axis:
        if abs(v) > 1e-12:
            return axis if v > 0 else -axis
    return axis


def log_map(r) -> np.ndarray:
    """Principal logarithm as an axis-angle vector with norm in [0, pi]."""
    r = np.asarray(r, dtype=float)
    skew = vee(r)
    s = np.linalg.norm(skew)
    c = (np.trace(r) - 1.0) / 2.0
    theta = np.arctan2(s, c)
    if theta < _SMALL_ANGLE:
        return skew * (1.0 + theta * theta / 6.0)
    if np.pi - theta > _NEAR_PI:
        return skew * (theta / np.sin(theta))
    # near pi: a a^T = (sym(R) - cos(theta) I) / (1 - cos(theta))
    sym = (r + r.T) / 2.0
    aat = (sym - np.cos(theta) * np.eye(3)) / (1.0 - np.cos(theta))
    k = int(np.argmax(np.diag(aat)))
    axis = aat[:, k] / np.sqrt(max(aat[k, k], 1e-300))
    axis /= np.linalg.norm(axis)
    if s > 1e-12:
        if axis @ skew < 0:
            axis = -axis
    else:
        axis = _canonical_sign(axis)
    return theta * axis


def geodesic_distance(r0, r1) -> float:
    return float(np.linalg.norm(log_map(np.asarray(r0).T @ np.asarray(r1))))


def geodesic_interp(r0, r1, t: float) -> np.ndarray:
    """``r0 exp(t log(r0^T r1))``."""
    r0 = np.asarray(r0, dtype=float)
    r1 = np.asarray(r1, dtype=float)
    if t == 0:
        return r0.copy()
    if t == 1:
        return r1.copy()
    return r0 @ exp_map(t * log_map(r0.T @ r1))


def so3_velocity(rt, r0, t: float) -> np.ndarray:
    """Body-frame velocity ``log(rt^T r0) / t`` at ``rt``.

    The vector lives in the tangent space at ``rt`` expressed in body
    coordinates; left-multiplying ``hat(v)`` by ``rt`` gives the ambient
    tangent matrix.
    """
    if t < 1e-9:
        raise NearZeroTime(f"flow time {t!r} is too close to 0")
    rt = np.asarray(rt, dtype=float)
    r0 = np.asarray(r0, dtype=float)
    return log_map(rt.T @ r0) / t


def quaternion_to_matrix(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def sample_uniform_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation from a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    while np.linalg.norm(q) < 1e-12:
        q = rng.standard_normal(4)
    return quaternion_to_matrix(q)


def sample_uniform_rotations(rng: np.random.Generator, count: int) -> np.ndarray:
    q = rng.standard_normal((count, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    w, x, y, z = q.T
    out = np.empty((count, 3, 3))
    out[:, 0, 0] = 1 - 2 * (y * y + z * z)
    out[:, 0, 1] = 2 * (x * y - w * z)
    out[:, 0, 2] = 2 * (x * z + w * y)
    out[:, 1, 0] = 2 * (x * y + w * z)
    out[:, 1, 1] = 1 - 2 * (x * x + z * z)
    out[:, 1, 2] = 2 * (y * z - w * x)
    out[:, 2, 0] = 2 * (x * z - w * y)
    out[:, 2, 1] = 2 * (y * z + w * x)
    out[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return out


def rot_x(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
