"""Goal generators expressed in the UGV frame N."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Array = np.ndarray


def _vec3(v) -> Array:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected shape (3,), got {a.shape}")
    return a


@dataclass(frozen=True)
class LeaderFollow:
    offset: tuple = (1.0, 0.0, 0.5)

    def goal(self, t: float) -> Array:
        return _vec3(self.offset).copy()


@dataclass(frozen=True)
class Orbit:
    radius: float = 1.0
    omega: float = 0.5
    center: tuple = (1.0, 0.0, 0.5)

    def __post_init__(self):
        if not self.radius > 0.0:
            raise ValueError("orbit radius must be positive")

    def goal(self, t: float) -> Array:
        ang = self.omega * t
        return _vec3(self.center) + self.radius * np.array([math.cos(ang), math.sin(ang), 0.0])


@dataclass(frozen=True)
class Land:
    """Straight descent onto ``platform`` along ``approach`` (pointing from the pad to the UAV).

    The goal starts ``start_distance`` out and slides in at ``descent_speed``.
    The trial counts as landed once within ``tolerance`` of the pad while
    slower than ``max_touchdown_speed``.
    """

    approach: tuple = (-1.0, 0.0, 1.0)
    platform: tuple = (0.0, 0.0, 0.3)
    start_distance: float = 1.5
    descent_speed: float = 0.3
    tolerance: float = 0.05
    max_touchdown_speed: float = 0.2
    _unit: Array = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        d = _vec3(self.approach)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError("approach direction must be non-zero")
        if not (self.start_distance >= 0.0 and self.descent_speed > 0.0):
            raise ValueError("start_distance must be >= 0 and descent_speed > 0")
        object.__setattr__(self, "_unit", d / n)

    def goal(self, t: float) -> Array:
        s = max(0.0, self.start_distance - self.descent_speed * t)
        return _vec3(self.platform) + s * self._unit

    def landed(self, p, v) -> bool:
        return bool(
            np.linalg.norm(np.asarray(p) - _vec3(self.platform)) < self.tolerance
            and np.linalg.norm(v) < self.max_touchdown_speed
        )


def task_goal(task, t: float) -> Array:
    """Goal position in frame N at time ``t``."""
    return task.goal(t)
