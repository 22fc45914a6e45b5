"""Sample-based modulation matrix built from one sweep of raw obstacle points.

Every sampled point is treated as a tiny spherical obstacle. The points are
reduced to a single weighted reference direction ``r`` (the normal of a
virtual obstacle); a Householder basis aligned with ``r`` and a pair of
eigenvalues then give the modulation matrix ``M = E D E``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

Array = np.ndarray

# Distances are floored here so the inverse-power weights stay finite.
_MIN_DISTANCE = 1e-9


@dataclass(frozen=True)
class SampleCloud:
    """Obstacle samples in frame N, each a ball of radius ``point_radius``."""

    points: Array = field(default_factory=lambda: np.zeros((0, 3)))
    point_radius: float = 0.05

    def __post_init__(self):
        pts = np.ascontiguousarray(np.asarray(self.points, dtype=np.float64))
        if pts.size == 0:
            pts = np.zeros((0, 3))
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("sample points must be finite")
        if not self.point_radius > 0.0:
            raise ValueError("point_radius must be positive")
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class ModulationParams:
    robot_radius: float = 0.3
    dist_scale: float = 0.5
    dist_power: float = 2.0
    max_weight: float = 3.0
    align_power: float = 2.0

    def __post_init__(self):
        for name in ("robot_radius", "dist_scale", "dist_power", "max_weight", "align_power"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be a positive finite number, got {value}")


@dataclass(frozen=True)
class ModulationResult:
    r: Array
    E: Array
    D: Array
    M: Array
    collided: bool

    @property
    def lambda_r(self) -> float:
        return float(self.D[0, 0])

    @property
    def lambda_t(self) -> float:
        return float(self.D[1, 1])


@njit(cache=True)
def _reference_direction_xyz(x0, x1, x2, points, radius, dist_scale, dist_power, max_weight):
    rx = 0.0
    ry = 0.0
    rz = 0.0
    w_total = 0.0
    collided = False
    for o in range(points.shape[0]):
        dx = x0 - points[o, 0]
        dy = x1 - points[o, 1]
        dz = x2 - points[o, 2]
        dist = math.sqrt(dx * dx + dy * dy + dz * dz)
        gap = dist - radius
        if gap <= 0.0:
            collided = True
            w = max_weight
        else:
            w = (dist_scale / max(gap, _MIN_DISTANCE)) ** dist_power
        w_total += w
        if dist > 0.0:
            f = w / dist
            rx += f * dx
            ry += f * dy
            rz += f * dz
    w_sum = min(w_total, max_weight)
    if w_sum > 1.0:
        rx /= w_sum
        ry /= w_sum
        rz /= w_sum
    return rx, ry, rz, collided


@njit(cache=True)
def _reference_direction(xi, points, radius, dist_scale, dist_power, max_weight):
    rx, ry, rz, collided = _reference_direction_xyz(
        xi[0], xi[1], xi[2], points, radius, dist_scale, dist_power, max_weight
    )
    return np.array([rx, ry, rz]), collided


@njit(cache=True)
def _basis(r):
    nrm = math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    rn = r / nrm
    w = rn.copy()
    # Pick the sign that keeps w away from zero.
    if rn[0] > 0.0:
        w[0] += 1.0
    else:
        w[0] -= 1.0
    E = np.eye(3) - 2.0 * np.outer(w, w) / (w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    if r[0] * E[0, 0] + r[1] * E[1, 0] + r[2] * E[2, 0] < 0.0:
        E = -E
    return E


@njit(cache=True)
def _eigenvalues_xyz(r0, r1, r2, v0, v1, v2, align_power):
    r_norm = math.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
    v_norm = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
    rv = r0 * v0 + r1 * v1 + r2 * v2

    if r_norm < 2.0:
        lam_r = math.cos(0.5 * math.pi * r_norm)
    else:
        lam_r = -1.0
    if rv > 0.0 and r_norm > 1.0:
        lam_r = -lam_r

    if r_norm < 1.0:
        lam_t = 1.0 + math.sin(0.5 * math.pi * r_norm)
    else:
        lam_t = 2.0 * math.sin(0.5 * math.pi / r_norm)

    p = 1.0 if r_norm <= 1.0 else 1.0 / r_norm
    if r_norm > 0.0 and v_norm > 0.0:
        cos_angle = rv / (r_norm * v_norm)
        s_a = max(0.0, cos_angle) ** align_power
    else:
        s_a = 0.0
    sgn = 1.0 if s_a > 0.0 else 0.0

    lam_t_tilde = p * s_a + (1.0 - p * s_a) * lam_t
    lam_r_tilde = sgn * p * lam_t_tilde + (1.0 - sgn * p) * lam_r
    return lam_r_tilde, lam_t_tilde


@njit(cache=True)
def _eigenvalues(r, v, align_power):
    return _eigenvalues_xyz(r[0], r[1], r[2], v[0], v[1], v[2], align_power)


@njit(cache=True)
def _modulated_velocity_xyz(x0, x1, x2, v0, v1, v2, points, radius, dist_scale,
                            dist_power, max_weight, align_power):
    """Allocation-free ``E D E v``; the same basis and eigenvalues as ``_modulation``."""
    r0, r1, r2, collided = _reference_direction_xyz(
        x0, x1, x2, points, radius, dist_scale, dist_power, max_weight
    )
    if r0 == 0.0 and r1 == 0.0 and r2 == 0.0:
        return v0, v1, v2, collided
    nrm = math.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
    w0 = r0 / nrm
    w1 = r1 / nrm
    w2 = r2 / nrm
    if w0 > 0.0:
        w0 += 1.0
    else:
        w0 -= 1.0
    k = 2.0 / (w0 * w0 + w1 * w1 + w2 * w2)
    # First column of I - k w w^T decides the orientation flip.
    sign = 1.0
    if r0 * (1.0 - k * w0 * w0) - r1 * k * w1 * w0 - r2 * k * w2 * w0 < 0.0:
        sign = -1.0
    lam_r, lam_t = _eigenvalues_xyz(r0, r1, r2, v0, v1, v2, align_power)
    # u = E v
    wv = w0 * v0 + w1 * v1 + w2 * v2
    u0 = sign * (v0 - k * w0 * wv) * lam_r
    u1 = sign * (v1 - k * w1 * wv) * lam_t
    u2 = sign * (v2 - k * w2 * wv) * lam_t
    # E u
    wu = w0 * u0 + w1 * u1 + w2 * u2
    return (
        sign * (u0 - k * w0 * wu),
        sign * (u1 - k * w1 * wu),
        sign * (u2 - k * w2 * wu),
        collided,
    )


@njit(cache=True)
def _modulation(xi, v, points, radius, dist_scale, dist_power, max_weight, align_power):
    r, collided = _reference_direction(xi, points, radius, dist_scale, dist_power, max_weight)
    if r[0] == 0.0 and r[1] == 0.0 and r[2] == 0.0:
        eye = np.eye(3)
        return r, eye, eye.copy(), eye.copy(), collided
    E = _basis(r)
    lam_r, lam_t = _eigenvalues(r, v, align_power)
    D = np.zeros((3, 3))
    D[0, 0] = lam_r
    D[1, 1] = lam_t
    D[2, 2] = lam_t
    M = E @ D @ E
    return r, E, D, M, collided


def _vec3(v) -> Array:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected shape (3,), got {a.shape}")
    return a


def weighted_reference_direction(
    xi, cloud: SampleCloud, params: ModulationParams
) -> tuple[Array, bool]:
    """Distance-weighted sum of unit vectors pointing from the samples to ``xi``.

    Returns ``(r, collided)``; ``collided`` is set when ``xi`` lies within
    ``robot_radius`` of any sample (such points get ``max_weight``).
    """
    return _reference_direction(
        _vec3(xi),
        cloud.points,
        params.robot_radius,
        params.dist_scale,
        params.dist_power,
        params.max_weight,
    )


def gen_basis_matrix(r) -> Array:
    """Symmetric orthonormal Householder basis whose first column is ``r/|r|``."""
    r = _vec3(r)
    if not np.any(r):
        raise ValueError("reference direction must be non-zero")
    return _basis(r)


def eigenvalues(r, v_init, params: ModulationParams) -> tuple[float, float]:
    """Normal and tangential eigenvalues after the alignment relaxation."""
    return _eigenvalues(_vec3(r), _vec3(v_init), params.align_power)


def modulation_matrix(
    xi, v_init, cloud: SampleCloud, params: ModulationParams
) -> ModulationResult:
    r, E, D, M, collided = _modulation(
        _vec3(xi),
        _vec3(v_init),
        cloud.points,
        params.robot_radius,
        params.dist_scale,
        params.dist_power,
        params.max_weight,
        params.align_power,
    )
    return ModulationResult(r, E, D, M, collided)


def modulate(xi, v_init, cloud: SampleCloud, params: ModulationParams) -> Array:
    """Modulated velocity ``M(xi, v_init) @ v_init``."""
    v = _vec3(v_init)
    return modulation_matrix(xi, v, cloud, params).M @ v
