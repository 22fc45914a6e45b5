"""Local collision-free reference trajectories in frame N.

A proportional pull toward the goal is bounded to unit norm, modulated by the
sample-based matrix at each reference point and rolled forward with a fixed
step. Reference attitudes follow from differential flatness: the desired
thrust direction is the reference acceleration minus the fictitious terms of
the non-inertial model, with the body x-axis locked to the x-axis of N.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from conioa.dynamics import GRAVITY, NonInertialQuantities
from conioa.modulation import ModulationParams, SampleCloud, _modulated_velocity_xyz
from conioa.se3 import IDENTITY_QUAT, _matrix_to_quat

Array = np.ndarray


@dataclass(frozen=True)
class TrajectoryParams:
    k_p: float = 1.0
    dt: float = 0.1
    horizon: int = 20
    theta_low: float = math.pi / 3.0
    g: float = GRAVITY

    def __post_init__(self):
        if not self.k_p > 0.0:
            raise ValueError("k_p must be positive")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValueError("horizon must be an integer >= 1")
        if not 0.0 < self.theta_low < 0.5 * math.pi:
            raise ValueError("theta_low must lie in (0, pi/2)")


@dataclass(frozen=True)
class ReferenceTrajectory:
    """Reference samples; sample ``i`` is meant for time ``(i + 1) * dt`` after planning.

    ``start_position``/``start_velocity`` describe time zero (the planner's
    seed), which lets consumers interpolate between planning instants.
    """

    positions: Array
    velocities: Array
    quaternions: Array
    dt: float
    start_position: Array
    start_velocity: Array
    collided: bool = False
    collision_index: int = -1

    def __len__(self) -> int:
        return self.positions.shape[0]

    @property
    def samples(self) -> list[dict[str, Array]]:
        return [
            {"p_ref": p, "v_ref": v, "q_ref": q}
            for p, v, q in zip(self.positions, self.velocities, self.quaternions)
        ]

    @classmethod
    def hold(cls, p, horizon: int = 20, dt: float = 0.1, q=None) -> "ReferenceTrajectory":
        """A stationary hover reference at ``p``."""
        p = np.asarray(p, dtype=np.float64)
        q = IDENTITY_QUAT if q is None else np.asarray(q, dtype=np.float64)
        return cls(
            positions=np.tile(p, (horizon, 1)),
            velocities=np.zeros((horizon, 3)),
            quaternions=np.tile(q, (horizon, 1)),
            dt=dt,
            start_position=p.copy(),
            start_velocity=np.zeros(3),
        )

    def reference_states(self, n_nodes: int, node_dt: float, elapsed: float = 0.0) -> Array:
        """Reference states ``[p, v, q]`` at ``elapsed + k * node_dt``, k < n_nodes.

        Linear interpolation between samples (normalized for the attitude);
        times past the end repeat the last sample.
        """
        return _interpolate_reference(
            self.start_position,
            self.start_velocity,
            self.positions,
            self.velocities,
            self.quaternions,
            self.dt,
            n_nodes,
            node_dt,
            elapsed,
        )


@njit(cache=True)
def _interpolate_reference(p0, v0, P, V, Q, dt, n_nodes, node_dt, elapsed):
    h = P.shape[0]
    out = np.empty((n_nodes, 10))
    for k in range(n_nodes):
        tau = (elapsed + k * node_dt) / dt
        # Knot j is time j*dt; knot 0 is the start, knot j>0 is sample j-1.
        if tau <= 0.0:
            j0 = 0
            frac = 0.0
        elif tau >= h:
            j0 = h
            frac = 0.0
        else:
            j0 = int(math.floor(tau))
            frac = tau - j0
        j1 = min(j0 + 1, h)
        if j0 == 0:
            pa, va, qa = p0, v0, Q[0]
        else:
            pa, va, qa = P[j0 - 1], V[j0 - 1], Q[j0 - 1]
        pb, vb, qb = P[j1 - 1], V[j1 - 1], Q[j1 - 1]
        out[k, 0:3] = pa + frac * (pb - pa)
        out[k, 3:6] = va + frac * (vb - va)
        if qa[0] * qb[0] + qa[1] * qb[1] + qa[2] * qb[2] + qa[3] * qb[3] < 0.0:
            qb = -qb
        q = qa + frac * (qb - qa)
        out[k, 6:10] = q / math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return out


@njit(cache=True)
def _attitude_from_thrust(t0, t1, t2, theta_low, qp0, qp1, qp2, qp3):
    t_norm = math.sqrt(t0 * t0 + t1 * t1 + t2 * t2)
    if t_norm < 1e-9:
        return qp0, qp1, qp2, qp3
    z0 = t0 / t_norm
    z1 = t1 / t_norm
    z2 = t2 / t_norm

    sin_low = math.sin(theta_low)
    if z2 < sin_low:
        # Tilt back toward +z inside the vertical plane through z.
        hn = math.sqrt(z0 * z0 + z1 * z1)
        if hn < 1e-12:
            hx, hy = 1.0, 0.0
        else:
            hx, hy = z0 / hn, z1 / hn
        c = math.cos(theta_low)
        z0, z1, z2 = c * hx, c * hy, sin_low

    # y = z x (1, 0, 0), x = y x z
    yn = math.sqrt(z2 * z2 + z1 * z1)
    y0, y1, y2 = 0.0, z2 / yn, -z1 / yn
    x0 = y1 * z2 - y2 * z1
    x1 = y2 * z0 - y0 * z2
    x2 = y0 * z1 - y1 * z0
    R = np.empty((3, 3))
    R[0, 0], R[1, 0], R[2, 0] = x0, x1, x2
    R[0, 1], R[1, 1], R[2, 1] = y0, y1, y2
    R[0, 2], R[1, 2], R[2, 2] = z0, z1, z2
    q = _matrix_to_quat(R)
    return q[0], q[1], q[2], q[3]


@njit(cache=True)
def _thrust_vector(p0, p1, p2, v0, v1, v2, a0, a1, a2, n):
    """Reference acceleration minus the fictitious terms of the relative model."""
    ox, oy, oz = n[3], n[4], n[5]
    bx, by, bz = n[6], n[7], n[8]
    # beta x p
    e0 = by * p2 - bz * p1
    e1 = bz * p0 - bx * p2
    e2 = bx * p1 - by * p0
    # Omega x v
    c0 = oy * v2 - oz * v1
    c1 = oz * v0 - ox * v2
    c2 = ox * v1 - oy * v0
    # Omega x (Omega x p)
    w0 = oy * p2 - oz * p1
    w1 = oz * p0 - ox * p2
    w2 = ox * p1 - oy * p0
    g0 = oy * w2 - oz * w1
    g1 = oz * w0 - ox * w2
    g2 = ox * w1 - oy * w0
    return (
        a0 + e0 + 2.0 * c0 + g0 + n[0],
        a1 + e1 + 2.0 * c1 + g1 + n[1],
        a2 + e2 + 2.0 * c2 + g2 + n[2],
    )


@njit(cache=True)
def _reference_attitude(p_ref, v_ref, v_last, n, dt, theta_low, q_prev):
    a = (v_ref - v_last) / dt
    t0, t1, t2 = _thrust_vector(
        p_ref[0], p_ref[1], p_ref[2], v_ref[0], v_ref[1], v_ref[2], a[0], a[1], a[2], n
    )
    q0, q1, q2, q3 = _attitude_from_thrust(
        t0, t1, t2, theta_low, q_prev[0], q_prev[1], q_prev[2], q_prev[3]
    )
    return np.array([q0, q1, q2, q3])


@njit(cache=True)
def _bound_xyz(x0, x1, x2):
    nrm = math.sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    if nrm >= 1.0:
        return x0 / nrm, x1 / nrm, x2 / nrm
    return x0, x1, x2


@njit(cache=True)
def _gen_trajectory(
    p_now, points, n, goal, k_p, dt, horizon, theta_low,
    radius, dist_scale, dist_power, max_weight, align_power,
):
    P = np.empty((horizon, 3))
    V = np.empty((horizon, 3))
    Q = np.empty((horizon, 4))
    collision_index = -1

    p0, p1, p2 = p_now[0], p_now[1], p_now[2]
    g0, g1, g2 = goal[0], goal[1], goal[2]
    i0, i1, i2 = _bound_xyz(-k_p * (p0 - g0), -k_p * (p1 - g1), -k_p * (p2 - g2))
    v0, v1, v2, frozen = _modulated_velocity_xyz(
        p0, p1, p2, i0, i1, i2, points, radius, dist_scale, dist_power, max_weight, align_power
    )
    if frozen:
        v0, v1, v2 = 0.0, 0.0, 0.0
        collision_index = 0
    v_seed = np.array([v0, v1, v2])
    qa, qb, qc, qd = 1.0, 0.0, 0.0, 0.0

    for i in range(horizon):
        p0 = p0 + v0 * dt
        p1 = p1 + v1 * dt
        p2 = p2 + v2 * dt
        if frozen:
            v0, v1, v2 = 0.0, 0.0, 0.0
        else:
            i0, i1, i2 = _bound_xyz(-k_p * (p0 - g0), -k_p * (p1 - g1), -k_p * (p2 - g2))
            m0, m1, m2, collided = _modulated_velocity_xyz(
                p0, p1, p2, i0, i1, i2, points, radius, dist_scale, dist_power,
                max_weight, align_power,
            )
            if collided:
                frozen = True
                collision_index = i
                v0, v1, v2 = 0.0, 0.0, 0.0
            else:
                t0, t1, t2 = _thrust_vector(
                    p0, p1, p2, m0, m1, m2,
                    (m0 - v0) / dt, (m1 - v1) / dt, (m2 - v2) / dt, n,
                )
                qa, qb, qc, qd = _attitude_from_thrust(t0, t1, t2, theta_low, qa, qb, qc, qd)
                v0, v1, v2 = m0, m1, m2
        P[i, 0], P[i, 1], P[i, 2] = p0, p1, p2
        V[i, 0], V[i, 1], V[i, 2] = v0, v1, v2
        Q[i, 0], Q[i, 1], Q[i, 2], Q[i, 3] = qa, qb, qc, qd
    return P, V, Q, v_seed, collision_index


def _vec3(v) -> Array:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected shape (3,), got {a.shape}")
    return a


def bound(x) -> Array:
    """Scale ``x`` onto the unit ball if it lies outside."""
    x = _vec3(x)
    return np.array(_bound_xyz(x[0], x[1], x[2]))


def initial_velocity(p_ref, p_goal, k_p: float) -> Array:
    """Bounded proportional velocity toward the goal."""
    return bound(-k_p * (_vec3(p_ref) - _vec3(p_goal)))


def reference_attitude(
    p_ref,
    v_ref,
    v_last,
    n: NonInertialQuantities,
    dt: float,
    theta_low: float,
    q_prev=None,
) -> Array:
    """Flatness-based attitude reference for one trajectory sample.

    Falls back to ``q_prev`` (identity by default) when the required thrust
    vector vanishes. The thrust axis is kept at least ``theta_low`` above the
    horizontal plane of N.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    q_prev = IDENTITY_QUAT if q_prev is None else np.asarray(q_prev, dtype=np.float64)
    return _reference_attitude(
        _vec3(p_ref), _vec3(v_ref), _vec3(v_last), n.as_array(), float(dt), float(theta_low), q_prev
    )


def gen_trajectory(
    p_now,
    cloud: SampleCloud,
    n: NonInertialQuantities,
    p_goal,
    params: TrajectoryParams,
    mod_params: ModulationParams,
) -> ReferenceTrajectory:
    """Roll the modulated velocity field forward for ``params.horizon`` samples.

    ``cloud`` and ``n`` are snapshots held constant over the window. If any
    reference point ends up inside a sample's inflated radius the rest of the
    trajectory stops there and ``collided`` is set.
    """
    p_now = _vec3(p_now)
    if not np.all(np.isfinite(p_now)):
        raise ValueError("p_now must be finite")
    P, V, Q, v_seed, hit = _gen_trajectory(
        p_now,
        cloud.points,
        n.as_array(),
        _vec3(p_goal),
        float(params.k_p),
        float(params.dt),
        int(params.horizon),
        float(params.theta_low),
        mod_params.robot_radius,
        mod_params.dist_scale,
        mod_params.dist_power,
        mod_params.max_weight,
        mod_params.align_power,
    )
    return ReferenceTrajectory(
        positions=P,
        velocities=V,
        quaternions=Q,
        dt=float(params.dt),
        start_position=p_now,
        start_velocity=v_seed,
        collided=hit >= 0,
        collision_index=int(hit),
    )
