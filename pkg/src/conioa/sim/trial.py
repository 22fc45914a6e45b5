"""Closed-loop trial: ground-truth world, synthetic sensing, planner and MPC.

Timing: physics at ``dt_sim`` (1 ms), MPC at ``controller.rate`` with a
zero-order hold on the input, a LiDAR sweep and a fresh reference trajectory
every ``1 / sensor.rate`` seconds. Between plans the MPC reads the reference at
the time elapsed since it was generated.
"""

from __future__ import annotations

import json
import math
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from conioa.dynamics import RelativeState, _rk4_step
from conioa.mpc import TrackingMpc
from conioa.se3 import _conjugate, _hamilton, _quat_to_matrix, hamilton, rotate
from conioa.sim.scenario import SCHEMA_VERSION, ScenarioSpec
from conioa.sim.sensor import lidar_sample
from conioa.sim.tasks import Land
from conioa.sim.ugv import UgvState, _unicycle_step
from conioa.sim.world import ObstacleSet, _min_sdf
from conioa.trajectory import gen_trajectory

Array = np.ndarray

TRACE_COLUMNS = (
    "t",
    "ugv_x", "ugv_y", "ugv_yaw", "ugv_speed", "ugv_yaw_rate",
    "uav_x", "uav_y", "uav_z", "uav_qw", "uav_qx", "uav_qy", "uav_qz",
    "rel_px", "rel_py", "rel_pz", "rel_vx", "rel_vy", "rel_vz",
    "rel_qw", "rel_qx", "rel_qy", "rel_qz",
    "ref_px", "ref_py", "ref_pz",
    "goal_x", "goal_y", "goal_z",
    "T", "wx", "wy", "wz",
    "clearance",
)


@dataclass
class WorldState:
    """Ground truth: UGV planar state and UAV ``[p, v, q]`` in the world frame W."""

    ugv: UgvState
    uav: Array
    time: float = 0.0


def relative_observation(world: WorldState) -> RelativeState:
    """UAV state expressed in the UGV frame N (what an onboard estimator would report)."""
    ugv = world.ugv
    q_n = ugv.quaternion
    R = _quat_to_matrix(q_n)
    p = R.T @ (world.uav[0:3] - ugv.position)
    v = R.T @ (world.uav[3:6] - ugv.velocity) - np.cross(ugv.body_rate, p)
    q = _hamilton(_conjugate(q_n), world.uav[6:10])
    return RelativeState(p, v, q / np.linalg.norm(q))


def world_from_relative(ugv: UgvState, rel: RelativeState) -> Array:
    """Inverse of :func:`relative_observation` for the UAV part."""
    q_n = ugv.quaternion
    p = ugv.position + rotate(q_n, rel.p)
    v = ugv.velocity + rotate(q_n, rel.v + np.cross(ugv.body_rate, rel.p))
    q = hamilton(q_n, rel.q)
    return np.concatenate((p, v, q / np.linalg.norm(q)))


@njit(cache=True)
def _advance(uav, u, n_world, ugv, v_cmd, w_cmd, a_max, alpha_max, dt, steps, kinds, geom, radius):
    min_clear = np.inf
    for _ in range(steps):
        uav = _rk4_step(uav, u, n_world, dt)
        ugv = _unicycle_step(ugv, v_cmd, w_cmd, a_max, alpha_max, dt)
        c = _min_sdf(kinds, geom, uav[0], uav[1], uav[2]) - radius
        if c < min_clear:
            min_clear = c
    return uav, ugv, min_clear


@dataclass
class TrialMetrics:
    success: bool
    min_clearance: float
    tracking_rmse: float
    mean_plan_time: float
    max_plan_time: float
    mean_solve_time: float
    max_solve_time: float
    sim_time: float
    final_error: float = math.nan
    aborted: bool = False
    diagnostic: str = ""
    landed: bool | None = None
    trace: Array = field(default_factory=lambda: np.zeros((0, len(TRACE_COLUMNS))), repr=False)

    _TIMING = ("mean_plan_time", "max_plan_time", "mean_solve_time", "max_solve_time")

    def summary(self) -> dict:
        out = {
            "success": self.success,
            "min_clearance": self.min_clearance,
            "tracking_rmse": self.tracking_rmse,
            "sim_time": self.sim_time,
            "final_error": self.final_error,
            "aborted": self.aborted,
            "diagnostic": self.diagnostic,
            "landed": self.landed,
        }
        out.update({k: getattr(self, k) for k in self._TIMING})
        return out

    def deterministic_summary(self) -> dict:
        """Summary without wall-clock timings (those vary run to run)."""
        return {k: v for k, v in self.summary().items() if k not in self._TIMING}

    def write(self, out_dir, spec: ScenarioSpec | None = None) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(
            out / "trace.csv", self.trace, delimiter=",", fmt="%.17g",
            header=",".join(TRACE_COLUMNS), comments="",
        )
        payload = {"schema_version": SCHEMA_VERSION, "metrics": _jsonable(self.summary())}
        if spec is not None:
            payload["scenario"] = spec.model_dump(mode="json")
        (out / "summary.json").write_text(json.dumps(payload, indent=2) + "\n")


def _jsonable(d: dict) -> dict:
    # JSON has no infinities; an empty map reports an infinite clearance.
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def initial_world(spec: ScenarioSpec, program) -> WorldState:
    """UGV at its program's start pose; UAV at the task's t = 0 goal, at rest in N, level."""
    ugv = program.initial_state()
    rel = RelativeState(spec.start_offset(), np.zeros(3))
    return WorldState(ugv, world_from_relative(ugv, rel), 0.0)


def run_trial(spec: ScenarioSpec, obstacles: ObstacleSet | None = None, keep_trace: bool = True,
              stop_on_violation: bool = True) -> TrialMetrics:
    """Run one deterministic closed-loop trial.

    The trial stops early on the first clearance violation (the outcome is
    already decided) unless ``stop_on_violation`` is false, and aborts on a
    diverging or non-finite UAV state.
    """
    g = spec.gravity
    if obstacles is None:
        obstacles = spec.build_obstacles()
    program = spec.build_program(obstacles)
    task = spec.build_task()
    lidar = spec.lidar_config()
    tparams = spec.trajectory_params()
    mparams = spec.modulation_params()
    cfg = spec.mpc_config()
    mpc = TrackingMpc(cfg, warm_start=spec.controller.warm_start)
    rng = np.random.default_rng([spec.seed, 0x1D])
    noise = spec.disturbance.imu_noise_std
    delay = deque([cfg.hover_input.copy()] * spec.disturbance.input_delay_ticks)

    world = initial_world(spec, program)
    uav = world.uav
    ugv_arr = world.ugv.as_array()
    n_world = np.array([0.0, 0.0, g, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
    bound = 10.0 * float(np.max(np.abs(np.concatenate((spec.map.bounds_min, spec.map.bounds_max)))))

    tick = 1.0 / spec.controller.rate
    n_ticks = int(round(spec.duration * spec.controller.rate))
    substeps = spec.control_substeps
    sense_every = spec.sense_every

    min_clear = float(_min_sdf(obstacles.kinds, obstacles.geom, *uav[0:3])) - spec.uav_radius
    plan_times, solve_times, sq_err, rows = [], [], [], []
    traj = None
    t_plan = 0.0
    aborted, diagnostic, landed = False, "", None
    if isinstance(task, Land):
        landed = False
    t = 0.0

    for k in range(n_ticks):
        t = k * tick
        ugv = UgvState.from_array(ugv_arr)
        world = WorldState(ugv, uav, t)
        n_now = ugv.noninertial(g)
        if noise > 0.0:
            n_now = type(n_now)(n_now.a_imu + rng.normal(0.0, noise, 3), n_now.omega_n, n_now.beta_n)
        x_rel = relative_observation(world)
        goal = task.goal(t)

        if k % sense_every == 0:
            cloud = lidar_sample(world, obstacles, lidar)
            start = time.perf_counter()
            traj = gen_trajectory(x_rel.p, cloud, n_now, goal, tparams, mparams)
            plan_times.append(time.perf_counter() - start)
            t_plan = t

        sol = mpc.step(x_rel, traj, n_now, t, t - t_plan)
        solve_times.append(sol.solve_time)
        u = sol.inputs[0]
        if delay:
            delay.append(u)
            u = delay.popleft()

        if t >= spec.transient:
            sq_err.append(float(np.sum((x_rel.p - goal) ** 2)))
        if keep_trace:
            ref = traj.reference_states(1, cfg.dt, t - t_plan)[0]
            rows.append(np.concatenate((
                [t], ugv_arr[0:5], uav[0:3], uav[6:10],
                x_rel.p, x_rel.v, x_rel.q, ref[0:3], goal, u, [min_clear],
            )))

        if landed is False and task.landed(x_rel.p, x_rel.v):
            landed = True
            break

        v_cmd, w_cmd = program.command(ugv, t)
        uav, ugv_arr, clear = _advance(
            uav, u, n_world, ugv_arr, v_cmd, w_cmd, program.accel_max, program.alpha_max,
            spec.dt_sim, substeps, obstacles.kinds, obstacles.geom, spec.uav_radius,
        )
        min_clear = min(min_clear, float(clear))
        t = (k + 1) * tick

        if not np.all(np.isfinite(uav)) or np.linalg.norm(uav[0:3]) > bound:
            aborted = True
            diagnostic = f"diverged at t={t:.3f}s"
            break
        if stop_on_violation and min_clear <= spec.success_clearance:
            diagnostic = f"clearance {min_clear:.4f} m at t={t:.3f}s"
            break

    success = (not aborted) and min_clear > spec.success_clearance
    final = relative_observation(WorldState(UgvState.from_array(ugv_arr), uav, t))
    final_error = float(np.linalg.norm(final.p - task.goal(t)))
    return TrialMetrics(
        success=bool(success),
        min_clearance=float(min_clear),
        tracking_rmse=float(math.sqrt(np.mean(sq_err))) if sq_err else float("nan"),
        mean_plan_time=float(np.mean(plan_times)) if plan_times else 0.0,
        max_plan_time=float(np.max(plan_times)) if plan_times else 0.0,
        mean_solve_time=float(np.mean(solve_times)) if solve_times else 0.0,
        max_solve_time=float(np.max(solve_times)) if solve_times else 0.0,
        sim_time=float(t),
        final_error=final_error,
        aborted=aborted,
        diagnostic=diagnostic,
        landed=landed,
        trace=np.array(rows) if rows else np.zeros((0, len(TRACE_COLUMNS))),
    )
