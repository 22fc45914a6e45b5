import math

import numpy as np
import pytest

from conioa.dynamics import is_degenerate
from conioa.se3 import yaw_quat
from conioa.sim.tasks import Land, LeaderFollow, Orbit, task_goal
from conioa.sim.trial import WorldState, relative_observation, world_from_relative
from conioa.dynamics import RelativeState
from conioa.sim.ugv import (
    RandomGoalProgram,
    RotateProgram,
    StaticProgram,
    UgvState,
    WaypointProgram,
    ugv_step,
)
from conioa.sim.world import ObstaclePrimitive, ObstacleSet, segment_clearance


def test_static_program_is_degenerate():
    state, n = ugv_step(StaticProgram(), UgvState(), 0.001)
    assert is_degenerate(n)
    assert state == UgvState()


def test_rotate_program():
    prog = RotateProgram(omega=0.5)
    s = prog.initial_state()
    for k in range(100):
        s, n = ugv_step(prog, s, 0.01, k * 0.01)
    np.testing.assert_allclose(n.omega_n, [0, 0, 0.5])
    np.testing.assert_allclose(n.a_imu, [0, 0, 9.8])
    np.testing.assert_array_equal(n.beta_n, 0.0)
    assert s.yaw == pytest.approx(0.5, abs=1e-12)
    assert (s.x, s.y) == (0.0, 0.0)


def test_waypoint_imu_matches_finite_difference():
    prog = WaypointProgram(v_max=1.0, omega_max=1.0, waypoints=[(3, 0), (3, 3), (0, 0)])
    s, dt = prog.initial_state(), 1e-3
    worst = 0.0
    for k in range(20000):
        s1, n = ugv_step(prog, s, dt, k * dt)
        acc_w = (s1.velocity - s.velocity) / dt
        mid = UgvState(yaw=0.5 * (s.yaw + s1.yaw))
        acc_b = np.array([[math.cos(mid.yaw), math.sin(mid.yaw)], [-math.sin(mid.yaw), math.cos(mid.yaw)]]) @ acc_w[:2]
        worst = max(worst, np.abs(acc_b - n.a_imu[:2]).max())
        assert n.a_imu[2] == 9.8
        s = s1
    assert worst < 5e-3
    assert prog.target is None  # reached the last waypoint
    assert math.hypot(s.x, s.y) < 0.1


def test_waypoint_limits():
    prog = WaypointProgram(v_max=0.8, omega_max=0.4, accel_max=1.0, waypoints=[(10, 5)])
    s = prog.initial_state()
    for k in range(3000):
        s1, _ = ugv_step(prog, s, 0.005, k * 0.005)
        assert s1.speed <= 0.8 + 1e-12 and abs(s1.yaw_rate) <= 0.4 + 1e-12
        assert abs(s1.speed - s.speed) <= 1.0 * 0.005 + 1e-12
        s = s1


def test_random_goal_program_deterministic_and_clear():
    obs = ObstacleSet.from_primitives([ObstaclePrimitive.cylinder((x, y), 0.5)
                                       for x in range(-8, 9, 4) for y in range(-6, 7, 4) if (x, y) != (0, 0)])

    def run():
        prog = RandomGoalProgram(v_max=1.0, omega_max=1.0, seed=7, obstacles=obs)
        s, goals = prog.initial_state(), []
        for k in range(4000):
            s, _ = ugv_step(prog, s, 0.01, k * 0.01)
            if prog.target not in goals:
                goals.append(prog.target)
        return s, goals

    a, goals = run()
    b, _ = run()
    assert a == b and len(goals) > 2
    for g in goals:
        assert segment_clearance(obs, g, g) > 1.5


def test_ugv_step_rejects_bad_dt():
    with pytest.raises(ValueError):
        ugv_step(StaticProgram(), UgvState(), 0.0)
    with pytest.raises(ValueError):
        StaticProgram(accel_max=0.0)


def _world(ugv, p, v, q=(1.0, 0, 0, 0)):
    return WorldState(ugv, np.concatenate((p, v, q)))


def test_relative_observation_trivial():
    ugv = UgvState(x=1.0, y=2.0, yaw=0.3, speed=0.5, yaw_rate=0.2)
    rel = relative_observation(_world(ugv, ugv.position, ugv.velocity, ugv.quaternion))
    np.testing.assert_allclose(rel.p, 0.0, atol=1e-15)
    np.testing.assert_allclose(rel.q, [1, 0, 0, 0], atol=1e-15)
    np.testing.assert_allclose(rel.v, 0.0, atol=1e-15)
    rel = relative_observation(_world(UgvState(), [1.0, 2, 3], [0.1, 0.2, 0.3], yaw_quat(0.4)))
    np.testing.assert_allclose(rel.p, [1, 2, 3])
    np.testing.assert_allclose(rel.v, [0.1, 0.2, 0.3])
    np.testing.assert_allclose(rel.q, yaw_quat(0.4))


def _ugv_at(t, x0, y0, yaw0, v, w):
    # Constant-speed, constant-turn-rate arc.
    yaw = yaw0 + w * t
    if abs(w) < 1e-12:
        return UgvState(x0 + v * t * math.cos(yaw0), y0 + v * t * math.sin(yaw0), yaw, v, w)
    x = x0 + v / w * (math.sin(yaw) - math.sin(yaw0))
    y = y0 - v / w * (math.cos(yaw) - math.cos(yaw0))
    return UgvState(x, y, yaw, v, w)


def test_relative_velocity_matches_finite_difference(rng):
    h = 1e-4
    cases = [((0, 0, 0, 0.0, 0.5), np.array([1.0, 0, 0]), np.zeros(3))]
    for _ in range(50):
        cases.append((tuple(rng.uniform(-2, 2, 5)), rng.uniform(-3, 3, 3), rng.uniform(-1, 1, 3)))
    for args, p0, vw in cases:
        def rel(t):
            return relative_observation(_world(_ugv_at(t, *args), p0 + vw * t, vw))
        t0 = 0.7
        fd = (rel(t0 + h).p - rel(t0 - h).p) / (2 * h)
        v = rel(t0).v
        assert np.abs(fd - v).max() <= 1e-3 * np.linalg.norm(v) + 1e-6


def test_rotating_ugv_fixed_uav_velocity():
    rel = relative_observation(_world(UgvState(yaw_rate=0.5), [1.0, 0, 0], np.zeros(3)))
    np.testing.assert_allclose(rel.v, [0, -0.5, 0], atol=1e-15)


def test_world_from_relative_roundtrip(rng):
    for _ in range(50):
        ugv = UgvState(*rng.uniform(-2, 2, 5))
        q = rng.normal(size=4)
        rel = RelativeState(rng.normal(size=3), rng.normal(size=3), q / np.linalg.norm(q))
        back = relative_observation(WorldState(ugv, world_from_relative(ugv, rel)))
        np.testing.assert_allclose(back.as_array()[:6], rel.as_array()[:6], atol=1e-12)
        assert min(np.abs(back.q - rel.q).max(), np.abs(back.q + rel.q).max()) < 1e-12


def test_task_goals():
    for t in (0.0, 3.0, 100.0):
        np.testing.assert_array_equal(task_goal(LeaderFollow((0, -1.3, 1.3)), t), [0, -1.3, 1.3])
    orbit = Orbit(radius=1.5, omega=0.5, center=(0, 0, 0))
    np.testing.assert_allclose(task_goal(orbit, 0.0), -task_goal(orbit, 2 * math.pi), atol=1e-12)
    orbit = Orbit(radius=1.0, omega=0.5, center=(1.0, 0.0, 0.5))
    for t in np.linspace(0, 10, 7):
        g = task_goal(orbit, t)
        assert np.linalg.norm(g - [1, 0, 0.5]) == pytest.approx(1.0)
        assert g[2] == 0.5


def test_land_task():
    land = Land(approach=(-1, 0, 1), platform=(0, 0, 0.3), start_distance=1.5, descent_speed=0.3)
    np.testing.assert_allclose(land.goal(0.0), [-1.5 / math.sqrt(2), 0, 0.3 + 1.5 / math.sqrt(2)])
    np.testing.assert_allclose(land.goal(5.0), [0, 0, 0.3])
    np.testing.assert_allclose(land.goal(50.0), [0, 0, 0.3])
    assert land.landed([0.0, 0.0, 0.33], [0.1, 0, 0])
    assert not land.landed([0.0, 0.0, 0.33], [0.3, 0, 0])
    assert not land.landed([0.0, 0.0, 0.4], [0.0, 0, 0])
    with pytest.raises(ValueError):
        Land(approach=(0, 0, 0))
