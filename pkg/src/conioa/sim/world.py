"""World-static obstacle primitives with analytic ray casting and signed distance.

Primitives are packed into two arrays for the numba kernels::

    kinds[i]  0 = sphere, 1 = vertical cylinder, 2 = axis-aligned box
    geom[i]   sphere   [cx, cy, cz, radius, 0, 0]
              cylinder [cx, cy, cz, radius, half_height, 0]
              box      [cx, cy, cz, hx, hy, hz]
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

Array = np.ndarray

SPHERE = 0
CYLINDER = 1
BOX = 2

_KIND_CODES = {"sphere": SPHERE, "cylinder": CYLINDER, "box": BOX}


@dataclass(frozen=True)
class ObstaclePrimitive:
    kind: str
    center: tuple[float, float, float]
    size: tuple[float, float, float]

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown obstacle kind {self.kind!r}")
        center = tuple(float(c) for c in self.center)
        size = tuple(float(s) for s in self.size)
        if len(center) != 3 or len(size) != 3:
            raise ValueError("center and size need three entries")
        used = {"sphere": 1, "cylinder": 2, "box": 3}[self.kind]
        if not all(s > 0.0 and math.isfinite(s) for s in size[:used]):
            raise ValueError(f"{self.kind} extents must be positive, got {size[:used]}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "size", size)

    @classmethod
    def sphere(cls, center, radius: float) -> "ObstaclePrimitive":
        return cls("sphere", tuple(center), (radius, 0.0, 0.0))

    @classmethod
    def cylinder(cls, center_xy, radius: float, z_min: float = 0.0, z_max: float = 3.0):
        """Vertical cylinder spanning ``z_min..z_max``."""
        if not z_max > z_min:
            raise ValueError("cylinder needs z_max > z_min")
        cz = 0.5 * (z_min + z_max)
        return cls("cylinder", (center_xy[0], center_xy[1], cz), (radius, 0.5 * (z_max - z_min), 0.0))

    @classmethod
    def box(cls, center, half_extents) -> "ObstaclePrimitive":
        return cls("box", tuple(center), tuple(half_extents))


@dataclass(frozen=True)
class ObstacleSet:
    """Packed primitives ready for the kernels."""

    kinds: Array
    geom: Array

    @classmethod
    def from_primitives(cls, prims) -> "ObstacleSet":
        prims = list(prims)
        kinds = np.array([_KIND_CODES[p.kind] for p in prims], dtype=np.int64)
        geom = np.zeros((len(prims), 6))
        for i, p in enumerate(prims):
            geom[i, 0:3] = p.center
            geom[i, 3:6] = p.size
        return cls(kinds, geom)

    @classmethod
    def empty(cls) -> "ObstacleSet":
        return cls(np.zeros(0, dtype=np.int64), np.zeros((0, 6)))

    def __len__(self) -> int:
        return self.kinds.shape[0]

    def subset(self, count: int) -> "ObstacleSet":
        return ObstacleSet(self.kinds[:count].copy(), self.geom[:count].copy())


@njit(cache=True)
def _sdf_one(kind, g, x, y, z):
    dx = x - g[0]
    dy = y - g[1]
    dz = z - g[2]
    if kind == SPHERE:
        return math.sqrt(dx * dx + dy * dy + dz * dz) - g[3]
    if kind == CYLINDER:
        dr = math.sqrt(dx * dx + dy * dy) - g[3]
        dh = abs(dz) - g[4]
        a = max(dr, 0.0)
        b = max(dh, 0.0)
        return math.sqrt(a * a + b * b) + min(max(dr, dh), 0.0)
    qx = abs(dx) - g[3]
    qy = abs(dy) - g[4]
    qz = abs(dz) - g[5]
    a = max(qx, 0.0)
    b = max(qy, 0.0)
    c = max(qz, 0.0)
    return math.sqrt(a * a + b * b + c * c) + min(max(qx, max(qy, qz)), 0.0)


@njit(cache=True)
def _min_sdf(kinds, geom, x, y, z):
    best = np.inf
    for i in range(kinds.shape[0]):
        d = _sdf_one(kinds[i], geom[i], x, y, z)
        if d < best:
            best = d
    return best


@njit(cache=True)
def _sdf_points(kinds, geom, pts):
    out = np.empty(pts.shape[0])
    for k in range(pts.shape[0]):
        out[k] = _min_sdf(kinds, geom, pts[k, 0], pts[k, 1], pts[k, 2])
    return out


@njit(cache=True)
def _ray_sphere(g, ox, oy, oz, dx, dy, dz):
    fx = ox - g[0]
    fy = oy - g[1]
    fz = oz - g[2]
    b = fx * dx + fy * dy + fz * dz
    c = fx * fx + fy * fy + fz * fz - g[3] * g[3]
    disc = b * b - c
    if disc < 0.0:
        return np.inf
    s = math.sqrt(disc)
    t = -b - s
    if t > 0.0:
        return t
    t = -b + s
    return t if t > 0.0 else np.inf


@njit(cache=True)
def _ray_cylinder(g, ox, oy, oz, dx, dy, dz):
    best = np.inf
    fx = ox - g[0]
    fy = oy - g[1]
    r = g[3]
    z_lo = g[2] - g[4]
    z_hi = g[2] + g[4]
    a = dx * dx + dy * dy
    if a > 0.0:
        b = fx * dx + fy * dy
        c = fx * fx + fy * fy - r * r
        disc = b * b - a * c
        if disc >= 0.0:
            s = math.sqrt(disc)
            for t in ((-b - s) / a, (-b + s) / a):
                if t > 0.0 and t < best:
                    z = oz + t * dz
                    if z_lo <= z <= z_hi:
                        best = t
    if dz != 0.0:
        for zc in (z_lo, z_hi):
            t = (zc - oz) / dz
            if t > 0.0 and t < best:
                px = fx + t * dx
                py = fy + t * dy
                if px * px + py * py <= r * r:
                    best = t
    return best


@njit(cache=True)
def _ray_box(g, ox, oy, oz, dx, dy, dz):
    t_near = -np.inf
    t_far = np.inf
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    for ax in range(3):
        lo = g[ax] - g[3 + ax]
        hi = g[ax] + g[3 + ax]
        if d[ax] == 0.0:
            if o[ax] < lo or o[ax] > hi:
                return np.inf
        else:
            t1 = (lo - o[ax]) / d[ax]
            t2 = (hi - o[ax]) / d[ax]
            if t1 > t2:
                t1, t2 = t2, t1
            t_near = max(t_near, t1)
            t_far = min(t_far, t2)
            if t_near > t_far:
                return np.inf
    if t_near > 0.0:
        return t_near
    return t_far if t_far > 0.0 else np.inf


@njit(cache=True)
def _ray_primitive(kind, g, ox, oy, oz, dx, dy, dz):
    if kind == SPHERE:
        return _ray_sphere(g, ox, oy, oz, dx, dy, dz)
    if kind == CYLINDER:
        return _ray_cylinder(g, ox, oy, oz, dx, dy, dz)
    return _ray_box(g, ox, oy, oz, dx, dy, dz)


@njit(cache=True)
def _bounding_radius(kind, g):
    if kind == SPHERE:
        return g[3]
    if kind == CYLINDER:
        return math.sqrt(g[3] * g[3] + g[4] * g[4])
    return math.sqrt(g[3] * g[3] + g[4] * g[4] + g[5] * g[5])


@njit(cache=True)
def _ray_distance(kinds, geom, ox, oy, oz, dx, dy, dz, max_range):
    best = max_range
    hit = False
    for i in range(kinds.shape[0]):
        t = _ray_primitive(kinds[i], geom[i], ox, oy, oz, dx, dy, dz)
        if t <= best:
            best = t
            hit = True
    return best, hit


@njit(cache=True)
def _cast_rays(kinds, geom, origin, dirs, max_range):
    """World-frame first hits of unit rays ``dirs`` (m, 3) from ``origin``."""
    ox, oy, oz = origin[0], origin[1], origin[2]
    m = kinds.shape[0]
    # Bounding spheres relative to the origin; primitives out of range are dropped.
    sel = np.empty(m, dtype=np.int64)
    rel = np.empty((m, 3))
    rb2 = np.empty(m)
    n_sel = 0
    for i in range(m):
        g = geom[i]
        rb = _bounding_radius(kinds[i], g)
        cx = g[0] - ox
        cy = g[1] - oy
        cz = g[2] - oz
        if math.sqrt(cx * cx + cy * cy + cz * cz) - rb <= max_range:
            sel[n_sel] = i
            rel[n_sel, 0] = cx
            rel[n_sel, 1] = cy
            rel[n_sel, 2] = cz
            rb2[n_sel] = rb * rb
            n_sel += 1

    out = np.empty((dirs.shape[0], 3))
    count = 0
    for j in range(dirs.shape[0]):
        dx, dy, dz = dirs[j, 0], dirs[j, 1], dirs[j, 2]
        best = max_range
        hit = False
        for a in range(n_sel):
            # Early out when the ray misses the bounding sphere.
            b = rel[a, 0] * dx + rel[a, 1] * dy + rel[a, 2] * dz
            c = rel[a, 0] * rel[a, 0] + rel[a, 1] * rel[a, 1] + rel[a, 2] * rel[a, 2] - rb2[a]
            if c > 0.0 and (b <= 0.0 or b * b < c):
                continue
            i = sel[a]
            t = _ray_primitive(kinds[i], geom[i], ox, oy, oz, dx, dy, dz)
            if t <= best:
                best = t
                hit = True
        if hit:
            out[count, 0] = ox + best * dx
            out[count, 1] = oy + best * dy
            out[count, 2] = oz + best * dz
            count += 1
    return out[:count]


@njit(cache=True)
def _segment_clearance_2d(kinds, geom, ax, ay, bx, by):
    """Smallest planar distance from segment AB to any obstacle footprint."""
    best = np.inf
    ex = bx - ax
    ey = by - ay
    ll = ex * ex + ey * ey
    for i in range(kinds.shape[0]):
        g = geom[i]
        s = 0.0
        if ll > 0.0:
            s = min(1.0, max(0.0, ((g[0] - ax) * ex + (g[1] - ay) * ey) / ll))
        px = ax + s * ex - g[0]
        py = ay + s * ey - g[1]
        if kinds[i] == BOX:
            # Circumscribed circle keeps the box test conservative.
            rad = math.sqrt(g[3] * g[3] + g[4] * g[4])
        else:
            rad = g[3]
        d = math.sqrt(px * px + py * py) - rad
        if d < best:
            best = d
    return best


def signed_distance(obstacles: ObstacleSet, points) -> Array:
    """Ground-truth signed distance of each point to the nearest surface."""
    pts = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=np.float64)))
    return _sdf_points(obstacles.kinds, obstacles.geom, pts)


def cast_rays(obstacles: ObstacleSet, origin, directions, max_range: float) -> Array:
    dirs = np.ascontiguousarray(np.asarray(directions, dtype=np.float64))
    return _cast_rays(
        obstacles.kinds, obstacles.geom, np.asarray(origin, dtype=np.float64), dirs, float(max_range)
    )


def segment_clearance(obstacles: ObstacleSet, a, b) -> float:
    return float(_segment_clearance_2d(obstacles.kinds, obstacles.geom, a[0], a[1], b[0], b[1]))


def random_cylinders(
    count: int,
    bounds_min,
    bounds_max,
    rng: np.random.Generator,
    radius_range=(0.3, 0.8),
    keepout=(),
    keepout_radius: float = 2.5,
) -> list[ObstaclePrimitive]:
    """Uniformly placed full-height cylinders, rejecting placements near ``keepout`` points.

    Drawing ``count`` obstacles and keeping a prefix gives nested maps: the
    first 100 of a 200-obstacle draw are exactly the 100-obstacle map.
    """
    lo = np.asarray(bounds_min, dtype=np.float64)
    hi = np.asarray(bounds_max, dtype=np.float64)
    keep = [np.asarray(k, dtype=np.float64)[:2] for k in keepout]
    prims = []
    while len(prims) < count:
        r = rng.uniform(*radius_range)
        xy = rng.uniform(lo[:2] + r, hi[:2] - r)
        if any(np.linalg.norm(xy - k) < keepout_radius + r for k in keep):
            continue
        prims.append(ObstaclePrimitive.cylinder(xy, r, lo[2], hi[2]))
    return prims
