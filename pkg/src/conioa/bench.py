"""Micro-benchmarks of the planner and the MPC on synthetic inputs."""

from __future__ import annotations

import time

import numpy as np

from conioa.dynamics import GRAVITY, NonInertialQuantities, RelativeState, _rk4_steps
from conioa.modulation import ModulationParams, SampleCloud
from conioa.mpc import MpcConfig, TrackingMpc, solve
from conioa.trajectory import TrajectoryParams, gen_trajectory


def _stats(samples) -> dict:
    a = np.asarray(samples) * 1e3
    return {
        "mean_ms": float(a.mean()),
        "median_ms": float(np.median(a)),
        "p95_ms": float(np.percentile(a, 95)),
        "repeats": int(a.size),
    }


def synthetic_cloud(n_points: int, rng: np.random.Generator, r_min=3.0, r_max=10.0) -> SampleCloud:
    """Points in a spherical shell around the origin (uniform in volume)."""
    d = rng.normal(size=(n_points, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = np.cbrt(rng.uniform(r_min**3, r_max**3, size=n_points))
    return SampleCloud(d * r[:, None])


def rotating_frame(omega: float = 0.5, g: float = GRAVITY) -> NonInertialQuantities:
    return NonInertialQuantities(np.array([0.0, 0.0, g]), np.array([0.0, 0.0, omega]))


def bench_gen_trajectory(n_points: int, horizon: int = 20, repeats: int = 50, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    cloud = synthetic_cloud(n_points, rng)
    n = rotating_frame()
    params = TrajectoryParams(horizon=horizon)
    mod = ModulationParams()
    goal = np.array([1.0, 0.0, 0.5])
    gen_trajectory(np.zeros(3), cloud, n, goal, params, mod)  # compile
    times = []
    for _ in range(repeats):
        p0 = rng.uniform(-0.2, 0.2, 3)
        start = time.perf_counter()
        gen_trajectory(p0, cloud, n, goal, params, mod)
        times.append(time.perf_counter() - start)
    return {"n_points": n_points, "horizon": horizon, **_stats(times)}


def bench_mpc(horizon_steps: int = 20, repeats: int = 100, seed: int = 0) -> dict:
    """Warm-started closed-loop solves (100 Hz) and cold solves from random offsets."""
    rng = np.random.default_rng(seed)
    cfg = MpcConfig(horizon_steps=horizon_steps)
    n = rotating_frame()
    goal = np.array([1.0, 0.0, 0.5])
    traj = gen_trajectory(goal, SampleCloud(), n, goal, TrajectoryParams(), ModulationParams())
    x = RelativeState(goal + rng.uniform(-0.5, 0.5, 3), np.zeros(3))
    solve(x, traj, n, cfg)  # compile

    mpc = TrackingMpc(cfg)
    warm, warm_iters = [], []
    xa = x.as_array()
    na = n.as_array()
    for k in range(repeats):
        sol = mpc.step(RelativeState.from_array(xa), traj, n, k * 0.01)
        warm.append(sol.solve_time)
        warm_iters.append(sol.iterations)
        xa = _rk4_steps(xa, sol.inputs[0], na, 0.001, 10)

    cold, cold_iters = [], []
    for _ in range(repeats):
        x0 = RelativeState(goal + rng.uniform(-0.5, 0.5, 3), rng.uniform(-0.3, 0.3, 3))
        sol = solve(x0, traj, n, cfg)
        cold.append(sol.solve_time)
        cold_iters.append(sol.iterations)
    return {
        "horizon_steps": horizon_steps,
        "warm": _stats(warm) | {"mean_iterations": float(np.mean(warm_iters))},
        "cold": _stats(cold) | {"mean_iterations": float(np.mean(cold_iters))},
    }
