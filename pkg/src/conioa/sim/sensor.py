"""Synthetic LiDAR: a fixed azimuth x elevation ray grid cast from the UAV."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from conioa.modulation import SampleCloud
from conioa.se3 import _quat_to_matrix
from conioa.sim.world import ObstacleSet, _cast_rays

Array = np.ndarray


@dataclass(frozen=True)
class LidarConfig:
    n_azimuth: int = 64
    n_elevation: int = 16
    elevation_min: float = -math.radians(75.0)
    elevation_max: float = math.radians(75.0)
    max_range: float = 10.0
    rate: float = 10.0
    point_radius: float = 0.05

    def __post_init__(self):
        if self.n_azimuth < 1 or self.n_elevation < 1:
            raise ValueError("ray counts must be at least 1")
        if not (self.max_range > 0.0 and self.rate > 0.0):
            raise ValueError("max_range and rate must be positive")
        if self.elevation_max < self.elevation_min:
            raise ValueError("elevation_max must not be below elevation_min")

    @property
    def period(self) -> float:
        return 1.0 / self.rate


@lru_cache(maxsize=16)
def _grid(n_az: int, n_el: int, el_min: float, el_max: float) -> Array:
    az = 2.0 * np.pi * np.arange(n_az) / n_az
    if n_el == 1:
        el = np.array([0.5 * (el_min + el_max)])
    else:
        el = np.linspace(el_min, el_max, n_el)
    A, E = np.meshgrid(az, el, indexing="ij")
    dirs = np.stack((np.cos(E) * np.cos(A), np.cos(E) * np.sin(A), np.sin(E)), axis=-1)
    dirs = dirs.reshape(-1, 3)
    dirs.setflags(write=False)
    return dirs


def ray_directions(cfg: LidarConfig) -> Array:
    """Unit ray directions in the sensor (UAV body) frame, shape (n_az * n_el, 3)."""
    return _grid(cfg.n_azimuth, cfg.n_elevation, cfg.elevation_min, cfg.elevation_max)


def scan_world(obstacles: ObstacleSet, origin, q_body, cfg: LidarConfig) -> Array:
    """First-hit points in the world frame for a body attitude ``q_body``."""
    R = _quat_to_matrix(np.asarray(q_body, dtype=np.float64))
    dirs = np.ascontiguousarray(ray_directions(cfg) @ R.T)
    return _cast_rays(
        obstacles.kinds, obstacles.geom, np.asarray(origin, dtype=np.float64), dirs, cfg.max_range
    )


def lidar_sample(world, obstacles: ObstacleSet, cfg: LidarConfig) -> SampleCloud:
    """Sweep from the UAV's world pose and express the hits in the UGV frame N."""
    uav_p = world.uav[0:3]
    hits = scan_world(obstacles, uav_p, world.uav[6:10], cfg)
    R_n = _quat_to_matrix(world.ugv.quaternion)
    pts = (hits - world.ugv.position) @ R_n
    return SampleCloud(pts, cfg.point_radius)
