"""Quadrotor dynamics expressed in the ground vehicle's body frame N.

State layout (flat 10-vector used by the kernels)::

    x = [p (3), v (3), q (4)]     position / velocity / attitude of the UAV in N
    u = [T, wx, wy, wz]           mass-normalized thrust, UAV body rate
    n = [a_imu (3), Omega (3), beta (3)]

``a_imu`` is the UGV's specific force (gravity reaction included), so a
parked, level UGV reports ``(0, 0, g)`` and the model collapses to the
usual world-frame quadrotor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from conioa.se3 import IDENTITY_QUAT, _cross, _mm, _normalize_quat

GRAVITY = 9.8

Array = np.ndarray


def _as_vec(v, size: int = 3) -> Array:
    a = np.array(v, dtype=np.float64)
    if a.shape != (size,):
        raise ValueError(f"expected shape ({size},), got {a.shape}")
    return a


@dataclass(frozen=True)
class RelativeState:
    """Pose and velocity of the UAV body frame B in frame N."""

    p: Array
    v: Array
    q: Array = field(default_factory=lambda: IDENTITY_QUAT.copy())

    def __post_init__(self):
        object.__setattr__(self, "p", _as_vec(self.p))
        object.__setattr__(self, "v", _as_vec(self.v))
        object.__setattr__(self, "q", _as_vec(self.q, 4))

    def as_array(self) -> Array:
        return np.concatenate((self.p, self.v, self.q))

    @classmethod
    def from_array(cls, x) -> "RelativeState":
        x = np.asarray(x, dtype=np.float64)
        return cls(x[0:3], x[3:6], x[6:10])


@dataclass(frozen=True)
class ControlInput:
    T: float
    omega: Array = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "omega", _as_vec(self.omega))

    def as_array(self) -> Array:
        return np.concatenate(([self.T], self.omega))

    @classmethod
    def from_array(cls, u) -> "ControlInput":
        u = np.asarray(u, dtype=np.float64)
        return cls(u[0], u[1:4])

    @classmethod
    def hover(cls, g: float = GRAVITY) -> "ControlInput":
        return cls(g, np.zeros(3))


@dataclass(frozen=True)
class NonInertialQuantities:
    """UGV IMU specific force, body rate and angular acceleration (all in N)."""

    a_imu: Array
    omega_n: Array = field(default_factory=lambda: np.zeros(3))
    beta_n: Array = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "a_imu", _as_vec(self.a_imu))
        object.__setattr__(self, "omega_n", _as_vec(self.omega_n))
        object.__setattr__(self, "beta_n", _as_vec(self.beta_n))

    def as_array(self) -> Array:
        return np.concatenate((self.a_imu, self.omega_n, self.beta_n))

    @classmethod
    def from_array(cls, n) -> "NonInertialQuantities":
        n = np.asarray(n, dtype=np.float64)
        return cls(n[0:3], n[3:6], n[6:9])

    @classmethod
    def world(cls, g: float = GRAVITY) -> "NonInertialQuantities":
        """The degenerate quantities of an inertial, gravity-aligned frame."""
        return cls(np.array([0.0, 0.0, g]))


@dataclass(frozen=True)
class StateDerivative:
    p_dot: Array
    v_dot: Array
    q_dot: Array

    def as_array(self) -> Array:
        return np.concatenate((self.p_dot, self.v_dot, self.q_dot))


@njit(cache=True)
def _derivative(x, u, n):
    p = x[0:3]
    v = x[3:6]
    w, qx, qy, qz = x[6], x[7], x[8], x[9]
    T = u[0]
    a_imu = n[0:3]
    om = n[3:6]
    beta = n[6:9]

    out = np.empty(10)
    out[0:3] = v
    # Thrust direction R(q) e_z.
    bz0 = 2.0 * (qx * qz + w * qy)
    bz1 = 2.0 * (qy * qz - w * qx)
    bz2 = w * w - qx * qx - qy * qy + qz * qz
    acc = (
        -_cross(beta, p)
        - 2.0 * _cross(om, v)
        - _cross(om, _cross(om, p))
        - a_imu
    )
    out[3] = acc[0] + T * bz0
    out[4] = acc[1] + T * bz1
    out[5] = acc[2] + T * bz2

    # q_dot = -1/2 Omega_N ⊙ q + 1/2 q ⊙ omega_B
    ox, oy, oz = om[0], om[1], om[2]
    bx, by, bzr = u[1], u[2], u[3]
    # Omega_N ⊙ q with Omega_N = (0, ox, oy, oz)
    l0 = -ox * qx - oy * qy - oz * qz
    l1 = ox * w + oy * qz - oz * qy
    l2 = -ox * qz + oy * w + oz * qx
    l3 = ox * qy - oy * qx + oz * w
    # q ⊙ omega_B with omega_B = (0, bx, by, bz)
    r0 = -qx * bx - qy * by - qz * bzr
    r1 = w * bx + qy * bzr - qz * by
    r2 = w * by - qx * bzr + qz * bx
    r3 = w * bzr + qx * by - qy * bx
    out[6] = 0.5 * (r0 - l0)
    out[7] = 0.5 * (r1 - l1)
    out[8] = 0.5 * (r2 - l2)
    out[9] = 0.5 * (r3 - l3)
    return out


@njit(cache=True)
def _rk4_step(x, u, n, dt):
    k1 = _derivative(x, u, n)
    k2 = _derivative(x + 0.5 * dt * k1, u, n)
    k3 = _derivative(x + 0.5 * dt * k2, u, n)
    k4 = _derivative(x + dt * k3, u, n)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[6:10] = _normalize_quat(out[6:10])
    return out


@njit(cache=True)
def _rk4_steps(x, u, n, dt, steps):
    for _ in range(steps):
        x = _rk4_step(x, u, n, dt)
    return x


@njit(cache=True)
def _jacobians(x, u, n):
    """Continuous-time Jacobians (df/dx, df/du)."""
    w, qx, qy, qz = x[6], x[7], x[8], x[9]
    T = u[0]
    om = n[3:6]
    beta = n[6:9]
    A = np.zeros((10, 10))
    B = np.zeros((10, 4))

    A[0, 3] = 1.0
    A[1, 4] = 1.0
    A[2, 5] = 1.0

    # d v_dot / d p = -[beta]x - [Omega]x^2 = -[beta]x + |Omega|^2 I - Omega Omega^T
    # d v_dot / d v = -2 [Omega]x
    o0, o1, o2 = om[0], om[1], om[2]
    b0, b1_, b2_ = beta[0], beta[1], beta[2]
    oo = o0 * o0 + o1 * o1 + o2 * o2
    A[3, 0] = oo - o0 * o0
    A[3, 1] = b2_ - o0 * o1
    A[3, 2] = -b1_ - o0 * o2
    A[4, 0] = -b2_ - o1 * o0
    A[4, 1] = oo - o1 * o1
    A[4, 2] = b0 - o1 * o2
    A[5, 0] = b1_ - o2 * o0
    A[5, 1] = -b0 - o2 * o1
    A[5, 2] = oo - o2 * o2
    A[3, 4] = 2.0 * o2
    A[3, 5] = -2.0 * o1
    A[4, 3] = -2.0 * o2
    A[4, 5] = 2.0 * o0
    A[5, 3] = 2.0 * o1
    A[5, 4] = -2.0 * o0

    # d (T R(q) e_z) / d q
    A[3, 6] = 2.0 * qy * T
    A[4, 6] = -2.0 * qx * T
    A[5, 6] = 2.0 * w * T
    A[3, 7] = 2.0 * qz * T
    A[4, 7] = -2.0 * w * T
    A[5, 7] = -2.0 * qx * T
    A[3, 8] = 2.0 * w * T
    A[4, 8] = 2.0 * qz * T
    A[5, 8] = -2.0 * qy * T
    A[3, 9] = 2.0 * qx * T
    A[4, 9] = 2.0 * qy * T
    A[5, 9] = 2.0 * qz * T

    B[3, 0] = 2.0 * (qx * qz + w * qy)
    B[4, 0] = 2.0 * (qy * qz - w * qx)
    B[5, 0] = w * w - qx * qx - qy * qy + qz * qz

    # d q_dot / d q = 1/2 (R(omega_B) - L(Omega_N)), both 4x4 product matrices.
    a1, a2, a3 = om[0], om[1], om[2]
    c1, c2, c3 = u[1], u[2], u[3]
    A[6, 7] = 0.5 * (-c1 + a1)
    A[6, 8] = 0.5 * (-c2 + a2)
    A[6, 9] = 0.5 * (-c3 + a3)
    A[7, 6] = 0.5 * (c1 - a1)
    A[7, 8] = 0.5 * (c3 + a3)
    A[7, 9] = 0.5 * (-c2 - a2)
    A[8, 6] = 0.5 * (c2 - a2)
    A[8, 7] = 0.5 * (-c3 - a3)
    A[8, 9] = 0.5 * (c1 + a1)
    A[9, 6] = 0.5 * (c3 - a3)
    A[9, 7] = 0.5 * (c2 + a2)
    A[9, 8] = 0.5 * (-c1 - a1)

    # d q_dot / d omega_B = 1/2 L(q)[:, 1:4]
    B[6, 1] = -0.5 * qx
    B[6, 2] = -0.5 * qy
    B[6, 3] = -0.5 * qz
    B[7, 1] = 0.5 * w
    B[7, 2] = -0.5 * qz
    B[7, 3] = 0.5 * qy
    B[8, 1] = 0.5 * qz
    B[8, 2] = 0.5 * w
    B[8, 3] = -0.5 * qx
    B[9, 1] = -0.5 * qy
    B[9, 2] = 0.5 * qx
    B[9, 3] = 0.5 * w
    return A, B


@njit(cache=True)
def _rk4_step_jac(x, u, n, dt):
    """One RK4 step plus exact Jacobians of the discrete map (incl. renormalization)."""
    eye = np.eye(10)
    k1 = _derivative(x, u, n)
    A1, B1 = _jacobians(x, u, n)
    x2 = x + 0.5 * dt * k1
    k2 = _derivative(x2, u, n)
    A2, B2 = _jacobians(x2, u, n)
    x3 = x + 0.5 * dt * k2
    k3 = _derivative(x3, u, n)
    A3, B3 = _jacobians(x3, u, n)
    x4 = x + dt * k3
    k4 = _derivative(x4, u, n)
    A4, B4 = _jacobians(x4, u, n)

    dk1x = A1
    dk1u = B1
    dk2x = _mm(A2, eye + 0.5 * dt * dk1x)
    dk2u = _mm(A2, 0.5 * dt * dk1u) + B2
    dk3x = _mm(A3, eye + 0.5 * dt * dk2x)
    dk3u = _mm(A3, 0.5 * dt * dk2u) + B3
    dk4x = _mm(A4, eye + dt * dk3x)
    dk4u = _mm(A4, dt * dk3u) + B4

    xn = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Fx = eye + (dt / 6.0) * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x)
    Fu = (dt / 6.0) * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u)

    q = xn[6:10].copy()
    nrm = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    qh = q / nrm
    Nq = (np.eye(4) - np.outer(qh, qh)) / nrm
    Fx[6:10, :] = _mm(Nq, Fx[6:10, :])
    Fu[6:10, :] = _mm(Nq, Fu[6:10, :])
    xn[6:10] = qh
    return xn, Fx, Fu


def _check_finite(*arrays) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite value in dynamics input")


def derivative(
    x: RelativeState, u: ControlInput, n: NonInertialQuantities
) -> StateDerivative:
    """Time derivative of the relative state under the non-inertial model."""
    xa, ua, na = x.as_array(), u.as_array(), n.as_array()
    _check_finite(xa, ua, na)
    if abs(np.linalg.norm(x.q) - 1.0) > 1e-6:
        raise ValueError("attitude quaternion is not unit-norm")
    d = _derivative(xa, ua, na)
    return StateDerivative(d[0:3], d[3:6], d[6:10])


def integrate_rk4(
    x: RelativeState, u: ControlInput, n: NonInertialQuantities, dt: float
) -> RelativeState:
    """Advance one classical RK4 step with ``u`` and ``n`` held constant.

    The attitude is renormalized after the step.
    """
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    xa, ua, na = x.as_array(), u.as_array(), n.as_array()
    _check_finite(xa, ua, na)
    return RelativeState.from_array(_rk4_step(xa, ua, na, float(dt)))


def is_degenerate(
    n: NonInertialQuantities, g: float = GRAVITY, tol: float = 1e-9
) -> bool:
    """True when ``n`` is the inertial, gravity-aligned parameter set."""
    ref = np.array([0.0, 0.0, g, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    return bool(np.all(np.abs(n.as_array() - ref) <= tol))
