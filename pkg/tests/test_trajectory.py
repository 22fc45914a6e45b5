import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conioa.dynamics import GRAVITY, NonInertialQuantities
from conioa.modulation import ModulationParams, SampleCloud
from conioa.se3 import IDENTITY_QUAT, quat_to_matrix
from conioa.trajectory import (
    ReferenceTrajectory,
    TrajectoryParams,
    bound,
    gen_trajectory,
    initial_velocity,
    reference_attitude,
)

WORLD = NonInertialQuantities.world()
MOD = ModulationParams()


def symbolic_thrust():
    """Thrust direction required by the relative model, derived with sympy."""
    p = sp.Matrix(sp.symbols("p0:3"))
    v = sp.Matrix(sp.symbols("v0:3"))
    a = sp.Matrix(sp.symbols("a0:3"))
    imu = sp.Matrix(sp.symbols("i0:3"))
    om = sp.Matrix(sp.symbols("o0:3"))
    be = sp.Matrix(sp.symbols("b0:3"))
    # Solve v_dot = a for the thrust vector of the relative model.
    fictitious = -be.cross(p) - 2 * om.cross(v) - om.cross(om.cross(p)) - imu
    t = a - fictitious
    return sp.lambdify([*p, *v, *a, *imu, *om, *be], t, "numpy")


THRUST = symbolic_thrust()


def test_bound_examples():
    np.testing.assert_array_equal(bound([0.3, 0, 0]), [0.3, 0, 0])
    np.testing.assert_allclose(bound([3, 4, 0]), [0.6, 0.8, 0], atol=1e-15)
    np.testing.assert_array_equal(bound([1, 0, 0]), [1, 0, 0])


def test_initial_velocity_examples():
    np.testing.assert_array_equal(initial_velocity([1, 2, 3], [1, 2, 3], 1.0), 0.0)
    np.testing.assert_allclose(initial_velocity([0.5, 0, 0], [0, 0, 0], 1.0), [-0.5, 0, 0])
    for k in (0.1, 1.0, 7.0):
        np.testing.assert_allclose(initial_velocity([10, 0, 0], [0, 0, 0], k), [-1, 0, 0])


def test_reference_attitude_hover():
    q = reference_attitude([3, 1, 2], [0.2, 0, 0], [0.2, 0, 0], WORLD, 0.1, math.pi / 3)
    np.testing.assert_allclose(q, IDENTITY_QUAT, atol=1e-12)


def test_reference_attitude_pitch():
    v_last = np.zeros(3)
    v_ref = np.array([GRAVITY * 0.1, 0, 0])
    q = reference_attitude(np.zeros(3), v_ref, v_last, WORLD, 0.1, math.pi / 6)
    R = quat_to_matrix(q)
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-12)
    np.testing.assert_allclose(R[:, 2], np.array([1, 0, 1]) / math.sqrt(2), atol=1e-12)


def test_reference_attitude_rotating_frame_matches_symbolic():
    n = NonInertialQuantities([0, 0, GRAVITY], [0, 0, 0.5])
    q = reference_attitude([1, 0, 0], np.zeros(3), np.zeros(3), n, 0.1, math.pi / 3)
    t = np.asarray(THRUST(1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, GRAVITY, 0, 0, 0.5, 0, 0, 0), float).ravel()
    np.testing.assert_allclose(t, [-0.25, 0, GRAVITY], atol=1e-15)
    np.testing.assert_allclose(quat_to_matrix(q)[:, 2], t / np.linalg.norm(t), atol=1e-12)


def test_reference_attitude_random_matches_symbolic(rng):
    for _ in range(100):
        p, v, vl, imu, om, be = rng.normal(size=(6, 3))
        imu[2] += 15.0  # keep the thrust inside the cone
        n = NonInertialQuantities(imu, om, be)
        q = reference_attitude(p, v, vl, n, 0.1, 0.1)
        t = np.asarray(THRUST(*p, *v, *((v - vl) / 0.1), *imu, *om, *be), float).ravel()
        z = t / np.linalg.norm(t)
        R = quat_to_matrix(q)
        if z[2] >= math.sin(0.1):
            np.testing.assert_allclose(R[:, 2], z, atol=1e-10)
        # Body y is orthogonal to the x-axis of N (heading locked to N).
        assert abs(R[0, 1]) < 1e-12


def test_reference_attitude_zero_thrust_holds_previous():
    q_prev = np.array([0.9, 0.1, -0.3, 0.2])
    q_prev /= np.linalg.norm(q_prev)
    n = NonInertialQuantities(np.zeros(3))
    q = reference_attitude(np.zeros(3), np.zeros(3), np.zeros(3), n, 0.1, 1.0, q_prev)
    np.testing.assert_array_equal(q, q_prev)


def test_cone_clamp_keeps_azimuth():
    v_ref = np.array([100.0, 50.0, 0.0])  # huge horizontal acceleration
    theta = math.radians(60)
    q = reference_attitude(np.zeros(3), v_ref, np.zeros(3), WORLD, 0.1, theta)
    z = quat_to_matrix(q)[:, 2]
    assert z[2] == pytest.approx(math.sin(theta), abs=1e-12)
    assert math.atan2(z[1], z[0]) == pytest.approx(math.atan2(50, 100), abs=1e-12)


def test_gen_trajectory_fixed_point():
    goal = np.array([1.0, 0.0, 0.5])
    tr = gen_trajectory(goal, SampleCloud(), WORLD, goal, TrajectoryParams(), MOD)
    assert len(tr) == 20
    np.testing.assert_array_equal(tr.positions, np.tile(goal, (20, 1)))
    np.testing.assert_array_equal(tr.velocities, 0.0)
    np.testing.assert_allclose(tr.quaternions, np.tile(IDENTITY_QUAT, (20, 1)), atol=1e-15)


def test_gen_trajectory_straight_line():
    tr = gen_trajectory(np.zeros(3), SampleCloud(), WORLD, [10, 0, 0], TrajectoryParams(), MOD)
    np.testing.assert_allclose(np.linalg.norm(tr.velocities, axis=1), 1.0, atol=1e-15)
    assert tr.positions[19, 0] == pytest.approx(2.0, abs=1e-9)
    np.testing.assert_array_equal(tr.positions[:, 1:], 0.0)


def test_gen_trajectory_avoids_cluster(rng):
    for _ in range(20):
        center = np.array([rng.uniform(1.0, 1.6), rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)])
        d = rng.normal(size=(300, 3))
        pts = center + 0.3 * d / np.linalg.norm(d, axis=1, keepdims=True)
        params = TrajectoryParams(k_p=0.5, horizon=60)
        tr = gen_trajectory(np.zeros(3), SampleCloud(pts), WORLD, [4, 0, 0], params, MOD)
        assert not tr.collided
        # Dense re-simulation: straight segments between samples.
        knots = np.vstack((np.zeros(3), tr.positions))
        s = np.linspace(0, 1, 21)[:, None]
        dense = np.vstack([a + s * (b - a) for a, b in zip(knots, knots[1:])])
        dist = np.linalg.norm(dense[:, None, :] - pts[None], axis=2).min()
        assert dist > MOD.robot_radius


def check_trajectory(tr, p_now, params):
    P, V, Q = tr.positions, tr.velocities, tr.quaternions
    assert np.array_equal(P[0], p_now + tr.start_velocity * params.dt)
    assert np.array_equal(P[1:], P[:-1] + V[:-1] * params.dt)
    assert np.abs(np.linalg.norm(Q, axis=1) - 1.0).max() < 1e-12
    z_elev = np.array([quat_to_matrix(q)[2, 2] for q in Q])
    assert np.all(z_elev >= math.sin(params.theta_low) - 1e-12)
    assert np.linalg.norm(V, axis=1).max() <= 2.0 + 1e-12


def random_setup(rng):
    pts = rng.uniform(-6, 6, size=(rng.integers(0, 300), 3))
    p_now = rng.uniform(-3, 3, 3)
    n = NonInertialQuantities(
        rng.normal(size=3) + [0, 0, GRAVITY], rng.normal(size=3) * 0.5, rng.normal(size=3) * 0.2
    )
    params = TrajectoryParams(
        k_p=rng.uniform(0.2, 3), dt=rng.uniform(0.02, 0.2), horizon=int(rng.integers(1, 30)),
        theta_low=rng.uniform(0.2, 1.4),
    )
    return p_now, SampleCloud(pts), n, rng.uniform(-3, 3, 3), params


def test_trajectory_self_consistency_random(rng):
    for _ in range(200):
        p_now, cloud, n, goal, params = random_setup(rng)
        tr = gen_trajectory(p_now, cloud, n, goal, params, MOD)
        check_trajectory(tr, p_now, params)


def test_trajectory_deterministic(rng):
    p_now, cloud, n, goal, params = random_setup(rng)
    a = gen_trajectory(p_now, cloud, n, goal, params, MOD)
    b = gen_trajectory(p_now, cloud, n, goal, params, MOD)
    for name in ("positions", "velocities", "quaternions"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_collision_freezes_remaining_samples():
    pts = np.array([[1.0, 0.0, 0.0]])
    tr = gen_trajectory([0.75, 0, 0], SampleCloud(pts), WORLD, [3, 0, 0], TrajectoryParams(), MOD)
    assert tr.collided
    k = tr.collision_index
    np.testing.assert_array_equal(tr.velocities[k:], 0.0)
    np.testing.assert_array_equal(tr.positions[k:], np.tile(tr.positions[k], (len(tr) - k, 1)))


vec = arrays(np.float64, 3, elements=st.floats(-20, 20))


@given(vec, st.floats(0.01, 10))
def test_initial_velocity_bounded(x, k):
    assert np.linalg.norm(initial_velocity(x, np.zeros(3), k)) <= 1.0 + 1e-15


def test_reference_interpolation():
    tr = ReferenceTrajectory.hold([1, 2, 3], horizon=5)
    X = tr.reference_states(8, 0.1, 0.05)
    np.testing.assert_allclose(X[:, 0:3], np.tile([1, 2, 3], (8, 1)))
    tr = gen_trajectory(np.zeros(3), SampleCloud(), WORLD, [10, 0, 0], TrajectoryParams(), MOD)
    X = tr.reference_states(3, 0.05, 0.0)
    np.testing.assert_allclose(X[:, 0], [0.0, 0.05, 0.1], atol=1e-15)


def test_params_validation():
    for bad in ({"k_p": 0}, {"dt": 0}, {"horizon": 0}, {"theta_low": math.pi / 2}):
        with pytest.raises(ValueError):
            TrajectoryParams(**bad)
