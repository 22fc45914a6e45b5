"""3D vector, quaternion and skew-symmetric helpers.

Conventions used everywhere in the package:

- Quaternions are Hamilton, scalar-first ``[w, x, y, z]``, right-handed.
- ``q`` describes a body-to-parent rotation: ``rotate(q, v_body) = v_parent``.
- SI units, radians.

The underscore-prefixed functions are numba kernels usable from other
kernels; the public wrappers accept any array-like input.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

Array = np.ndarray

IDENTITY_QUAT = np.array([1.0, 0.0, 0.0, 0.0])


@njit(cache=True)
def _mm(a, b):
    """Dense product for small matrices (avoids BLAS call overhead)."""
    n, m = a.shape
    p = b.shape[1]
    out = np.zeros((n, p))
    for i in range(n):
        for k in range(m):
            aik = a[i, k]
            if aik != 0.0:
                for j in range(p):
                    out[i, j] += aik * b[k, j]
    return out


@njit(cache=True)
def _mtm(a, b):
    """``a.T @ b`` for small matrices."""
    m, n = a.shape
    p = b.shape[1]
    out = np.zeros((n, p))
    for k in range(m):
        for i in range(n):
            aki = a[k, i]
            if aki != 0.0:
                for j in range(p):
                    out[i, j] += aki * b[k, j]
    return out


@njit(cache=True)
def _mv(a, v):
    n, m = a.shape
    out = np.zeros(n)
    for i in range(n):
        s = 0.0
        for k in range(m):
            s += a[i, k] * v[k]
        out[i] = s
    return out


@njit(cache=True)
def _dot(a, b):
    s = 0.0
    for i in range(a.shape[0]):
        s += a[i] * b[i]
    return s


@njit(cache=True)
def _mtv(a, v):
    m, n = a.shape
    out = np.zeros(n)
    for k in range(m):
        vk = v[k]
        for i in range(n):
            out[i] += a[k, i] * vk
    return out


@njit(cache=True)
def _cross(a, b):
    return np.array(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


@njit(cache=True)
def _skew(v):
    s = np.zeros((3, 3))
    s[0, 1] = -v[2]
    s[0, 2] = v[1]
    s[1, 0] = v[2]
    s[1, 2] = -v[0]
    s[2, 0] = -v[1]
    s[2, 1] = v[0]
    return s


@njit(cache=True)
def _hamilton(a, b):
    aw, ax, ay, az = a[0], a[1], a[2], a[3]
    bw, bx, by, bz = b[0], b[1], b[2], b[3]
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


@njit(cache=True)
def _conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


@njit(cache=True)
def _quat_to_matrix(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    r = np.empty((3, 3))
    r[0, 0] = w * w + x * x - y * y - z * z
    r[0, 1] = 2.0 * (x * y - w * z)
    r[0, 2] = 2.0 * (x * z + w * y)
    r[1, 0] = 2.0 * (x * y + w * z)
    r[1, 1] = w * w - x * x + y * y - z * z
    r[1, 2] = 2.0 * (y * z - w * x)
    r[2, 0] = 2.0 * (x * z - w * y)
    r[2, 1] = 2.0 * (y * z + w * x)
    r[2, 2] = w * w - x * x - y * y + z * z
    return r


@njit(cache=True)
def _rotate(q, v):
    # Expanded sandwich product q (0, v) q^-1 for a unit quaternion.
    w = q[0]
    u = q[1:4]
    t = 2.0 * _cross(u, v)
    return v + w * t + _cross(u, t)


@njit(cache=True)
def _matrix_to_quat(r):
    # Shepperd's method, picks the largest pivot for numerical stability.
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    q = np.empty(4)
    if tr > 0.0:
        s = math.sqrt(tr + 1.0) * 2.0
        q[0] = 0.25 * s
        q[1] = (r[2, 1] - r[1, 2]) / s
        q[2] = (r[0, 2] - r[2, 0]) / s
        q[3] = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q[0] = (r[2, 1] - r[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (r[0, 1] + r[1, 0]) / s
        q[3] = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q[0] = (r[0, 2] - r[2, 0]) / s
        q[1] = (r[0, 1] + r[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (r[1, 2] + r[2, 1]) / s
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q[0] = (r[1, 0] - r[0, 1]) / s
        q[1] = (r[0, 2] + r[2, 0]) / s
        q[2] = (r[1, 2] + r[2, 1]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        q = -q
    return q / math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


@njit(cache=True)
def _normalize_quat(q):
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return q / n


def _vec(v, size: int) -> Array:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (size,):
        raise ValueError(f"expected shape ({size},), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite component")
    return a


def skew(v) -> Array:
    """Matrix ``S`` with ``S @ u == cross(v, u)``."""
    return _skew(_vec(v, 3))


def cross(a, b) -> Array:
    return _cross(_vec(a, 3), _vec(b, 3))


def embed(v) -> Array:
    """Pure quaternion ``(0, v)``."""
    v = _vec(v, 3)
    return np.array([0.0, v[0], v[1], v[2]])


def hamilton(a, b) -> Array:
    """Hamilton product ``a ⊙ b``. Length-3 inputs are embedded as pure quaternions."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape == (3,):
        a = embed(a)
    if b.shape == (3,):
        b = embed(b)
    return _hamilton(_vec(a, 4), _vec(b, 4))


def conjugate(q) -> Array:
    return _conjugate(_vec(q, 4))


def inverse(q) -> Array:
    q = _vec(q, 4)
    return _conjugate(q) / float(q @ q)


def normalize(q) -> Array:
    q = _vec(q, 4)
    n = np.linalg.norm(q)
    if n == 0.0 or not np.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite quaternion")
    return q / n


def rotate(q, v) -> Array:
    """Rotate ``v`` by unit quaternion ``q`` (vector part of ``q ⊙ v ⊙ q⁻¹``)."""
    return _rotate(_vec(q, 4), _vec(v, 3))


def quat_to_matrix(q) -> Array:
    return _quat_to_matrix(_vec(q, 4))


def matrix_to_quat(r) -> Array:
    """Unit quaternion (``w >= 0``) of a proper rotation matrix."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError(f"expected shape (3, 3), got {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("non-finite component")
    return _matrix_to_quat(r)


def quat_from_axis_angle(axis, angle: float) -> Array:
    axis = _vec(axis, 3)
    norm = np.linalg.norm(axis)
    if norm == 0.0:
        raise ValueError("rotation axis must be non-zero")
    axis = axis / norm
    half = 0.5 * angle
    return np.concatenate(([math.cos(half)], math.sin(half) * axis))


def yaw_quat(yaw: float) -> Array:
    return np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)])


def quat_yaw(q) -> float:
    """Heading angle of the body x-axis projected on the parent xy-plane."""
    w, x, y, z = _vec(q, 4)
    return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
