"""Planar unicycle ground vehicle and its scripted motion programs.

The vehicle frame N sits at the UGV origin on the ground, x forward, z up.
State vector used by the kernels::

    s = [x, y, yaw, speed, yaw_rate, accel, yaw_accel]
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from conioa.dynamics import GRAVITY, NonInertialQuantities
from conioa.se3 import yaw_quat
from conioa.sim.world import ObstacleSet, segment_clearance

Array = np.ndarray


@dataclass(frozen=True)
class UgvState:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    speed: float = 0.0
    yaw_rate: float = 0.0
    accel: float = 0.0
    yaw_accel: float = 0.0

    def as_array(self) -> Array:
        return np.array(
            [self.x, self.y, self.yaw, self.speed, self.yaw_rate, self.accel, self.yaw_accel]
        )

    @classmethod
    def from_array(cls, s) -> "UgvState":
        return cls(*(float(v) for v in s))

    @property
    def position(self) -> Array:
        return np.array([self.x, self.y, 0.0])

    @property
    def quaternion(self) -> Array:
        return yaw_quat(self.yaw)

    @property
    def heading(self) -> Array:
        return np.array([math.cos(self.yaw), math.sin(self.yaw), 0.0])

    @property
    def velocity(self) -> Array:
        """World-frame velocity."""
        return self.speed * self.heading

    @property
    def acceleration(self) -> Array:
        """World-frame acceleration (tangential plus centripetal)."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        lat = self.speed * self.yaw_rate
        return np.array([self.accel * c - lat * s, self.accel * s + lat * c, 0.0])

    @property
    def body_rate(self) -> Array:
        return np.array([0.0, 0.0, self.yaw_rate])

    def noninertial(self, g: float = GRAVITY) -> NonInertialQuantities:
        """IMU specific force and body rate; the angular acceleration is reported as zero."""
        return NonInertialQuantities(_imu(self.as_array(), g), self.body_rate, np.zeros(3))


@njit(cache=True)
def _imu(s, g):
    # R^T (a_world + g e3) for a yaw-only attitude.
    return np.array([s[5], s[3] * s[4], g])


@njit(cache=True)
def _unicycle_step(s, v_cmd, w_cmd, a_max, alpha_max, dt):
    out = s.copy()
    a = min(a_max, max(-a_max, (v_cmd - s[3]) / dt))
    alpha = min(alpha_max, max(-alpha_max, (w_cmd - s[4]) / dt))
    v_mid = s[3] + 0.5 * a * dt
    yaw_mid = s[2] + 0.5 * s[4] * dt + 0.125 * alpha * dt * dt
    out[0] = s[0] + v_mid * math.cos(yaw_mid) * dt
    out[1] = s[1] + v_mid * math.sin(yaw_mid) * dt
    out[2] = s[2] + s[4] * dt + 0.5 * alpha * dt * dt
    out[3] = s[3] + a * dt
    out[4] = s[4] + alpha * dt
    out[5] = a
    out[6] = alpha
    return out


def _wrap(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


@dataclass
class UgvProgram:
    """Base program: holds still. Subclasses override ``command``."""

    v_max: float = 0.0
    omega_max: float = 0.0
    accel_max: float = 1.0
    alpha_max: float = 2.0

    def __post_init__(self):
        for name in ("accel_max", "alpha_max"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.v_max < 0.0 or self.omega_max < 0.0:
            raise ValueError("speed limits must be non-negative")

    def initial_state(self) -> UgvState:
        return UgvState()

    def command(self, state: UgvState, t: float) -> tuple[float, float]:
        return 0.0, 0.0


@dataclass
class StaticProgram(UgvProgram):
    pass


@dataclass
class RotateProgram(UgvProgram):
    """Turn in place at a constant yaw rate (already spinning at t = 0)."""

    omega: float = 0.5

    def __post_init__(self):
        super().__post_init__()
        self.omega_max = max(self.omega_max, abs(self.omega))

    def initial_state(self) -> UgvState:
        return UgvState(yaw_rate=self.omega)

    def command(self, state, t):
        return 0.0, self.omega


@dataclass
class WaypointProgram(UgvProgram):
    """Drive through ``waypoints`` in order with a trapezoidal speed profile per leg."""

    waypoints: tuple = ()
    tolerance: float = 0.1
    heading_gain: float = 2.0

    def __post_init__(self):
        super().__post_init__()
        self.waypoints = tuple(tuple(float(c) for c in w[:2]) for w in self.waypoints)
        self._index = 0

    @property
    def target(self):
        if self._index < len(self.waypoints):
            return self.waypoints[self._index]
        return None

    def _advance(self, state: UgvState) -> None:
        while self.target is not None:
            tx, ty = self.target
            if math.hypot(tx - state.x, ty - state.y) > self.tolerance:
                break
            self._index += 1

    def _track(self, state: UgvState, tx: float, ty: float) -> tuple[float, float]:
        dx, dy = tx - state.x, ty - state.y
        dist = math.hypot(dx, dy)
        err = _wrap(math.atan2(dy, dx) - state.yaw)
        w = max(-self.omega_max, min(self.omega_max, self.heading_gain * err))
        # Speed that still lets the vehicle stop on the waypoint.
        v = min(self.v_max, math.sqrt(2.0 * self.accel_max * dist))
        v *= max(0.0, math.cos(err)) ** 2
        return v, w

    def command(self, state, t):
        self._advance(state)
        if self.target is None:
            return 0.0, 0.0
        return self._track(state, *self.target)


@dataclass
class RandomGoalProgram(WaypointProgram):
    """Keep picking random goals joined by obstacle-free straight segments.

    A candidate is accepted when the segment keeps ``clearance`` from every
    obstacle footprint and the goal point itself keeps ``goal_clearance``.
    If none of 200 candidates qualifies the least bad one is used.
    """

    seed: int = 0
    obstacles: ObstacleSet | None = None
    bounds_min: tuple = (-13.0, -10.0)
    bounds_max: tuple = (13.0, 10.0)
    clearance: float = 0.6
    goal_clearance: float = 1.5
    goal_distance: tuple = (2.0, 8.0)
    margin: float = 1.0
    tolerance: float = 0.3

    def __post_init__(self):
        super().__post_init__()
        self._rng = np.random.default_rng(self.seed)
        self._goal = None

    def _pick_goal(self, state: UgvState):
        obstacles = self.obstacles if self.obstacles is not None else ObstacleSet.empty()
        lo = np.asarray(self.bounds_min[:2], dtype=float) + self.margin
        hi = np.asarray(self.bounds_max[:2], dtype=float) - self.margin
        here = np.array([state.x, state.y])
        best, best_clear = None, -np.inf
        for _ in range(200):
            ang = self._rng.uniform(-math.pi, math.pi)
            dist = self._rng.uniform(*self.goal_distance)
            goal = np.clip(here + dist * np.array([math.cos(ang), math.sin(ang)]), lo, hi)
            if np.linalg.norm(goal - here) < self.tolerance * 2.0:
                continue
            if len(obstacles):
                # The goal needs open space to turn in; the path only a corridor.
                clear = min(
                    segment_clearance(obstacles, here, goal),
                    segment_clearance(obstacles, goal, goal) - (self.goal_clearance - self.clearance),
                )
            else:
                clear = np.inf
            if clear > self.clearance:
                return tuple(goal)
            if clear > best_clear:
                best, best_clear = tuple(goal), clear
        return best

    @property
    def target(self):
        return self._goal

    def command(self, state, t):
        if self._goal is None or math.hypot(self._goal[0] - state.x, self._goal[1] - state.y) < self.tolerance:
            self._goal = self._pick_goal(state)
            if self._goal is None:
                return 0.0, 0.0
        return self._track(state, *self._goal)


def ugv_step(program: UgvProgram, state: UgvState, dt: float, t: float = 0.0, g: float = GRAVITY):
    """Advance the unicycle by ``dt`` under the program's command.

    Returns the new state and the non-inertial quantities seen by its IMU.
    """
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    v_cmd, w_cmd = program.command(state, t)
    s = _unicycle_step(
        state.as_array(), v_cmd, w_cmd, program.accel_max, program.alpha_max, float(dt)
    )
    new = UgvState.from_array(s)
    return new, new.noninertial(g)
