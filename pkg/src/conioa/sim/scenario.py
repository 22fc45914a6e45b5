"""Versioned scenario schema (JSON) and builders for the simulation objects.

A scenario file is a JSON object validated by :class:`ScenarioSpec`. Values can
be overridden from the command line with dotted keys, e.g.
``ugv.v_max=1.5`` or ``map.obstacles.0.radius=0.4``; the right-hand side is
parsed as JSON when possible and kept as a string otherwise.
"""

from __future__ import annotations

import copy
import json
import math
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, PositiveInt
from pydantic import ValidationError, model_validator

from conioa.modulation import ModulationParams
from conioa.mpc import MpcConfig
from conioa.sim.sensor import LidarConfig
from conioa.sim.tasks import Land, LeaderFollow, Orbit
from conioa.sim.ugv import RandomGoalProgram, RotateProgram, StaticProgram, WaypointProgram
from conioa.sim.world import ObstaclePrimitive, ObstacleSet, random_cylinders, signed_distance
from conioa.trajectory import TrajectoryParams

SCHEMA_VERSION = 1

Vec3 = tuple[float, float, float]
Vec2 = tuple[float, float]


class ScenarioError(ValueError):
    """Raised for unreadable or invalid scenario files; the message names the field."""


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SphereSpec(_Model):
    kind: Literal["sphere"] = "sphere"
    center: Vec3
    radius: PositiveFloat

    def primitive(self) -> ObstaclePrimitive:
        return ObstaclePrimitive.sphere(self.center, self.radius)


class CylinderSpec(_Model):
    kind: Literal["cylinder"] = "cylinder"
    center: Vec2
    radius: PositiveFloat
    z_min: float = 0.0
    z_max: float = 3.0

    @model_validator(mode="after")
    def _heights(self):
        if not self.z_max > self.z_min:
            raise ValueError("z_max must exceed z_min")
        return self

    def primitive(self) -> ObstaclePrimitive:
        return ObstaclePrimitive.cylinder(self.center, self.radius, self.z_min, self.z_max)


class BoxSpec(_Model):
    kind: Literal["box"] = "box"
    center: Vec3
    half_extents: tuple[PositiveFloat, PositiveFloat, PositiveFloat]

    def primitive(self) -> ObstaclePrimitive:
        return ObstaclePrimitive.box(self.center, self.half_extents)


Obstacle = Annotated[Union[SphereSpec, CylinderSpec, BoxSpec], Field(discriminator="kind")]


class RandomObstaclesSpec(_Model):
    """Uniform random cylinders. ``pool`` obstacles are drawn and the first ``count`` kept,
    so maps of different density built from one seed are nested."""

    count: int = Field(0, ge=0)
    pool: Optional[int] = Field(None, ge=0)
    seed: Optional[int] = None
    radius_min: PositiveFloat = 0.3
    radius_max: PositiveFloat = 0.8
    keepout_radius: NonNegativeFloat = 2.5
    # Points (in N at t = 0) kept obstacle-free; default: UGV origin and UAV start.
    keepout: Optional[list[Vec3]] = None

    @model_validator(mode="after")
    def _ranges(self):
        if self.radius_max < self.radius_min:
            raise ValueError("radius_max must be >= radius_min")
        if self.pool is not None and self.pool < self.count:
            raise ValueError("pool must be >= count")
        return self


class MapSpec(_Model):
    bounds_min: Vec3 = (-13.0, -10.0, 0.0)
    bounds_max: Vec3 = (13.0, 10.0, 3.0)
    obstacles: list[Obstacle] = []
    random: RandomObstaclesSpec = RandomObstaclesSpec()

    @model_validator(mode="after")
    def _bounds(self):
        if not all(hi > lo for lo, hi in zip(self.bounds_min, self.bounds_max)):
            raise ValueError("bounds_max must exceed bounds_min on every axis")
        return self


class StaticSpec(_Model):
    kind: Literal["static"] = "static"


class RotateSpec(_Model):
    kind: Literal["rotate"] = "rotate"
    omega: float = 0.5


class WaypointsSpec(_Model):
    kind: Literal["waypoints"] = "waypoints"
    waypoints: list[Vec2] = Field(min_length=1)
    v_max: PositiveFloat = 0.5
    omega_max: PositiveFloat = 0.5
    accel_max: PositiveFloat = 1.0


class RandomGoalsSpec(_Model):
    kind: Literal["random_goals"] = "random_goals"
    v_max: PositiveFloat = 0.5
    omega_max: PositiveFloat = 0.5
    accel_max: PositiveFloat = 1.0
    seed: Optional[int] = None
    clearance: NonNegativeFloat = 0.6
    goal_clearance: NonNegativeFloat = 1.5


UgvSpec = Annotated[
    Union[StaticSpec, RotateSpec, WaypointsSpec, RandomGoalsSpec], Field(discriminator="kind")
]


class LeaderFollowSpec(_Model):
    kind: Literal["leader_follow"] = "leader_follow"
    offset: Vec3 = (1.0, 0.0, 0.5)


class OrbitSpec(_Model):
    kind: Literal["orbit"] = "orbit"
    radius: PositiveFloat = 1.0
    omega: float = 0.5
    center: Vec3 = (1.0, 0.0, 0.5)


class LandSpec(_Model):
    kind: Literal["land"] = "land"
    approach: Vec3 = (-1.0, 0.0, 1.0)
    platform: Vec3 = (0.0, 0.0, 0.3)
    start_distance: NonNegativeFloat = 1.5
    descent_speed: PositiveFloat = 0.3


TaskSpec = Annotated[Union[LeaderFollowSpec, OrbitSpec, LandSpec], Field(discriminator="kind")]


class SensorSpec(_Model):
    n_azimuth: PositiveInt = 64
    n_elevation: PositiveInt = 16
    elevation_min_deg: float = -75.0
    elevation_max_deg: float = 75.0
    max_range: PositiveFloat = 10.0
    rate: PositiveFloat = 10.0
    point_radius: PositiveFloat = 0.05


class PlannerSpec(_Model):
    k_p: PositiveFloat = 1.0
    dt: PositiveFloat = 0.1
    horizon: PositiveInt = 20
    theta_low_deg: float = Field(60.0, gt=0.0, le=90.0)
    robot_radius: PositiveFloat = 0.3
    dist_scale: PositiveFloat = 0.2
    dist_power: PositiveFloat = 4.0
    max_weight: PositiveFloat = 3.0
    align_power: PositiveFloat = 2.0


class ControllerSpec(_Model):
    rate: PositiveFloat = 100.0
    horizon_steps: PositiveInt = 20
    dt: PositiveFloat = 0.1
    T_min: PositiveFloat = 2.0
    T_max: PositiveFloat = 20.0
    omega_rp: PositiveFloat = 3.0
    omega_yaw: PositiveFloat = 1.0
    max_iterations: PositiveInt = 20
    Q: Optional[list[NonNegativeFloat]] = None
    R: Optional[list[NonNegativeFloat]] = None
    Q_final: Optional[list[NonNegativeFloat]] = None
    warm_start: bool = True


class DisturbanceSpec(_Model):
    imu_noise_std: NonNegativeFloat = 0.0
    input_delay_ticks: int = Field(0, ge=0)


class ScenarioSpec(_Model):
    version: Literal[1] = SCHEMA_VERSION
    name: str = "scenario"
    seed: int = 0
    duration: PositiveFloat = 10.0
    dt_sim: float = Field(0.001, gt=0.0, le=0.001)
    gravity: PositiveFloat = 9.8
    success_clearance: NonNegativeFloat = 0.1
    uav_radius: PositiveFloat = 0.3
    transient: NonNegativeFloat = 2.0
    uav_start: Optional[Vec3] = None
    map: MapSpec = MapSpec()
    ugv: UgvSpec = StaticSpec()
    task: TaskSpec = LeaderFollowSpec()
    sensor: SensorSpec = SensorSpec()
    planner: PlannerSpec = PlannerSpec()
    controller: ControllerSpec = ControllerSpec()
    disturbance: DisturbanceSpec = DisturbanceSpec()

    @model_validator(mode="after")
    def _consistency(self):
        ctrl = 1.0 / (self.controller.rate * self.dt_sim)
        if abs(ctrl - round(ctrl)) > 1e-6 or round(ctrl) < 1:
            raise ValueError("controller.rate must divide 1/dt_sim")
        sense = self.controller.rate / self.sensor.rate
        if abs(sense - round(sense)) > 1e-6 or round(sense) < 1:
            raise ValueError("sensor.rate must divide controller.rate")
        if self.sensor.elevation_max_deg < self.sensor.elevation_min_deg:
            raise ValueError("sensor.elevation_max_deg must be >= elevation_min_deg")
        need = self.uav_radius + self.success_clearance
        if self.map.obstacles:
            prims = ObstacleSet.from_primitives(o.primitive() for o in self.map.obstacles)
            for label, p in (("ugv", np.zeros(3)), ("uav", self.start_offset())):
                if signed_distance(prims, p)[0] <= need:
                    raise ValueError(f"map.obstacles: obstacle overlaps the {label} start region")
        return self

    # -- builders -----------------------------------------------------------

    @property
    def control_substeps(self) -> int:
        return int(round(1.0 / (self.controller.rate * self.dt_sim)))

    @property
    def sense_every(self) -> int:
        return int(round(self.controller.rate / self.sensor.rate))

    def start_offset(self) -> np.ndarray:
        """UAV start position in N: ``uav_start`` if given, else the task goal at t = 0."""
        if self.uav_start is not None:
            return np.array(self.uav_start, dtype=np.float64)
        return self.build_task().goal(0.0)

    def build_obstacles(self) -> ObstacleSet:
        prims = [o.primitive() for o in self.map.obstacles]
        rnd = self.map.random
        if rnd.count:
            seed = self.seed if rnd.seed is None else rnd.seed
            rng = np.random.default_rng([seed, 0x0B5])
            pool = random_cylinders(
                rnd.pool if rnd.pool is not None else rnd.count,
                self.map.bounds_min,
                self.map.bounds_max,
                rng,
                (rnd.radius_min, rnd.radius_max),
                keepout=rnd.keepout if rnd.keepout is not None else (np.zeros(3), self.start_offset()),
                keepout_radius=rnd.keepout_radius,
            )
            prims.extend(pool[: rnd.count])
        if not prims:
            return ObstacleSet.empty()
        return ObstacleSet.from_primitives(prims)

    def build_program(self, obstacles: ObstacleSet | None = None):
        u = self.ugv
        if u.kind == "static":
            return StaticProgram()
        if u.kind == "rotate":
            return RotateProgram(omega=u.omega)
        if u.kind == "waypoints":
            return WaypointProgram(
                v_max=u.v_max, omega_max=u.omega_max, accel_max=u.accel_max, waypoints=tuple(u.waypoints)
            )
        seed = u.seed if u.seed is not None else int(np.random.SeedSequence([self.seed, 0x06]).generate_state(1)[0])
        return RandomGoalProgram(
            v_max=u.v_max,
            omega_max=u.omega_max,
            accel_max=u.accel_max,
            seed=seed,
            obstacles=obstacles,
            bounds_min=self.map.bounds_min[:2],
            bounds_max=self.map.bounds_max[:2],
            clearance=u.clearance,
            goal_clearance=u.goal_clearance,
        )

    def build_task(self):
        t = self.task
        if t.kind == "leader_follow":
            return LeaderFollow(t.offset)
        if t.kind == "orbit":
            return Orbit(t.radius, t.omega, t.center)
        return Land(t.approach, t.platform, t.start_distance, t.descent_speed)

    def lidar_config(self) -> LidarConfig:
        s = self.sensor
        return LidarConfig(
            n_azimuth=s.n_azimuth,
            n_elevation=s.n_elevation,
            elevation_min=math.radians(s.elevation_min_deg),
            elevation_max=math.radians(s.elevation_max_deg),
            max_range=s.max_range,
            rate=s.rate,
            point_radius=s.point_radius,
        )

    def trajectory_params(self) -> TrajectoryParams:
        p = self.planner
        return TrajectoryParams(
            k_p=p.k_p, dt=p.dt, horizon=p.horizon, theta_low=math.radians(p.theta_low_deg), g=self.gravity
        )

    def modulation_params(self) -> ModulationParams:
        p = self.planner
        return ModulationParams(p.robot_radius, p.dist_scale, p.dist_power, p.max_weight, p.align_power)

    def mpc_config(self) -> MpcConfig:
        c = self.controller
        extra = {}
        if c.Q is not None:
            extra["Q"] = np.array(c.Q)
        if c.R is not None:
            extra["R_w"] = np.array(c.R)
        if c.Q_final is not None:
            extra["Q_final"] = np.array(c.Q_final)
        return MpcConfig(
            horizon_steps=c.horizon_steps,
            dt=c.dt,
            T_min=c.T_min,
            T_max=c.T_max,
            Omega_rp=c.omega_rp,
            Omega_yaw=c.omega_yaw,
            max_iterations=c.max_iterations,
            g=self.gravity,
            **extra,
        )


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Return a copy of ``data`` with ``key.path=value`` assignments applied."""
    out = copy.deepcopy(data)
    for item in overrides or ():
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = [p for p in key.strip().split(".") if p]
        if not parts:
            raise ScenarioError(f"override {item!r} has an empty key")
        node = out
        for depth, part in enumerate(parts[:-1]):
            where = ".".join(parts[: depth + 1])
            if isinstance(node, list):
                try:
                    node = node[int(part)]
                except (ValueError, IndexError):
                    raise ScenarioError(f"{where}: no such list element") from None
            else:
                nxt = node.get(part)
                if nxt is None:
                    nxt = node[part] = {}
                elif not isinstance(nxt, (dict, list)):
                    raise ScenarioError(f"{where}: cannot descend into a scalar")
                node = nxt
        leaf = parts[-1]
        value = _parse_value(raw)
        if isinstance(node, list):
            try:
                node[int(leaf)] = value
            except (ValueError, IndexError):
                raise ScenarioError(f"{key}: no such list element") from None
        else:
            node[leaf] = value
    return out


def _format_error(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        # Drop the discriminator tags pydantic inserts after a tagged-union field.
        raw = e["loc"]
        loc = [
            str(p) for i, p in enumerate(raw)
            if not (p in _TAGS and i and (raw[i - 1] in ("ugv", "task") or isinstance(raw[i - 1], int)))
        ]
        lines.append(f"{'.'.join(loc) or '<root>'}: {e['msg']}")
    return "; ".join(lines)


_TAGS = {
    "sphere", "cylinder", "box", "static", "rotate", "waypoints", "random_goals",
    "leader_follow", "orbit", "land",
}


def scenario_from_dict(data: dict, overrides=()) -> ScenarioSpec:
    data = apply_overrides(data, overrides)
    try:
        return ScenarioSpec.model_validate(data)
    except ValidationError as err:
        raise ScenarioError(_format_error(err)) from None


def load_scenario(path, overrides=()) -> ScenarioSpec:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as err:
        raise ScenarioError(f"cannot read {path}: {err.strerror}") from None
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: invalid JSON at line {err.lineno}: {err.msg}") from None
    if not isinstance(data, dict):
        raise ScenarioError("<root>: scenario must be a JSON object")
    return scenario_from_dict(data, overrides)
