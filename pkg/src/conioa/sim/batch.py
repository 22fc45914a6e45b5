"""Success-rate tables over density x UGV speed x task grids.

Every cell runs the same trial seeds, and the obstacle maps are nested: one
draw of ``max(density)`` cylinders per seed, shared by all tasks and truncated
to each cell's count.
Trials are independent, so they can be spread over a process pool; results
are merged by (cell, trial) index and do not depend on worker scheduling.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from conioa.sim.scenario import SCHEMA_VERSION, ScenarioSpec, scenario_from_dict
from conioa.sim.trial import run_trial

DENSITIES = {"sparse": 100, "medium": 150, "dense": 200}
SPEEDS = {"slow": (0.5, 0.5), "fast": (1.5, 1.5)}
TASKS = {
    "LF": {"kind": "leader_follow", "offset": [1.0, 0.0, 0.5]},
    "OF": {"kind": "orbit", "radius": 1.0, "omega": 0.5, "center": [1.0, 0.0, 0.5]},
}


@dataclass(frozen=True)
class Cell:
    task: str
    density: str
    speed: str


@dataclass
class CellResult:
    task: str
    density: str
    speed: str
    trials: int = 0
    successes: int = 0
    errors: int = 0
    min_clearances: list = field(default_factory=list)
    outcomes: list = field(default_factory=list)

    @property
    def success_rate(self) -> float:
        return self.successes / self.trials if self.trials else float("nan")


@dataclass
class BatchResult:
    cells: list[CellResult]
    seeds: list[int]

    def cell(self, task: str, density: str, speed: str) -> CellResult:
        for c in self.cells:
            if (c.task, c.density, c.speed) == (task, density, speed):
                return c
        raise KeyError((task, density, speed))

    def table(self) -> dict:
        """Nested ``{task: {density: {speed: rate}}}`` success rates."""
        out: dict = {}
        for c in self.cells:
            out.setdefault(c.task, {}).setdefault(c.density, {})[c.speed] = c.success_rate
        return out

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "table.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["task", "density", "speed", "trials", "successes", "errors", "success_rate"])
            for c in self.cells:
                w.writerow([c.task, c.density, c.speed, c.trials, c.successes, c.errors,
                            f"{c.success_rate:.4f}"])
        payload = {
            "schema_version": SCHEMA_VERSION,
            "seeds": self.seeds,
            "table": self.table(),
            "cells": [_finite(asdict(c) | {"success_rate": c.success_rate}) for c in self.cells],
        }
        (out / "table.json").write_text(json.dumps(payload, indent=2) + "\n")


def _finite(d: dict) -> dict:
    # JSON has no infinities or NaNs; an obstacle-free trial has infinite clearance.
    clean = [c if math.isfinite(c) else None for c in d["min_clearances"]]
    return d | {"min_clearances": clean}


def cell_scenario(template: dict, cell: Cell, seed: int, densities=DENSITIES, speeds=SPEEDS,
                  tasks=TASKS) -> ScenarioSpec:
    data = json.loads(json.dumps(template))
    data["seed"] = seed
    rnd = data.setdefault("map", {}).setdefault("random", {})
    rnd["count"] = densities[cell.density]
    rnd["pool"] = max(densities.values())
    rnd.pop("seed", None)
    # Same keep-out for every task, so all cells of a seed share one map pool.
    rnd["keepout"] = [[0.0, 0.0, 0.0]] + [_task_start(t) for t in tasks.values()]
    v_max, omega_max = speeds[cell.speed]
    ugv = {k: v for k, v in data.get("ugv", {}).items() if k in ("accel_max", "clearance", "goal_clearance")}
    data["ugv"] = {"kind": "random_goals", "v_max": v_max, "omega_max": omega_max, **ugv}
    data["task"] = tasks[cell.task]
    return scenario_from_dict(data)


def _task_start(task: dict) -> list:
    return [float(c) for c in scenario_from_dict({"task": task}).start_offset()]


def _run_one(job):
    index, trial, template, cell, seed, grids = job
    try:
        spec = cell_scenario(template, cell, seed, *grids)
        m = run_trial(spec, keep_trace=False)
        return index, trial, m.success, m.min_clearance, m.diagnostic, None
    except Exception as err:  # recorded per cell; the batch keeps going
        return index, trial, False, float("nan"), "", f"{type(err).__name__}: {err}"


def run_batch(
    template: ScenarioSpec | dict | None = None,
    trials: int = 50,
    densities=None,
    speeds=None,
    tasks=None,
    seed: int = 0,
    parallel: int = 1,
    progress=None,
) -> BatchResult:
    """Run ``trials`` seeded trials in every cell of the grid.

    ``densities``/``speeds``/``tasks`` select keys of the module-level grids
    (all by default). Trial ``i`` uses seed ``seed + i`` in every cell.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if template is None:
        template = {}
    if isinstance(template, ScenarioSpec):
        template = template.model_dump(mode="json")
    grids = (DENSITIES, SPEEDS, TASKS)
    cells = [
        Cell(t, d, s)
        for t in (tasks or TASKS)
        for d in (densities or DENSITIES)
        for s in (speeds or SPEEDS)
    ]
    seeds = [seed + i for i in range(trials)]
    results = [CellResult(c.task, c.density, c.speed) for c in cells]
    outcomes = {}
    jobs = [(ci, ti, template, c, s, grids) for ci, c in enumerate(cells) for ti, s in enumerate(seeds)]

    if parallel and parallel > 1:
        workers = min(parallel, os.cpu_count() or 1, len(jobs))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for res in pool.map(_run_one, jobs, chunksize=1):
                outcomes[(res[0], res[1])] = res
                if progress:
                    progress(len(outcomes), len(jobs))
    else:
        for job in jobs:
            res = _run_one(job)
            outcomes[(res[0], res[1])] = res
            if progress:
                progress(len(outcomes), len(jobs))

    for (ci, ti) in sorted(outcomes):
        _, _, success, clearance, diagnostic, error = outcomes[(ci, ti)]
        r = results[ci]
        r.trials += 1
        r.errors += error is not None
        r.successes += bool(success)
        r.min_clearances.append(clearance)
        r.outcomes.append(error or diagnostic or "ok")
    return BatchResult(results, seeds)
