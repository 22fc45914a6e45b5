import json

import numpy as np
import pytest

from conioa.sim.scenario import (
    ScenarioError,
    ScenarioSpec,
    apply_overrides,
    load_scenario,
    scenario_from_dict,
)
from conioa.sim.ugv import RandomGoalProgram, RotateProgram, StaticProgram, WaypointProgram

SCENARIOS = sorted((__import__("pathlib").Path(__file__).parent.parent / "scenarios").glob("*.json"))


def test_defaults_validate():
    spec = scenario_from_dict({})
    assert spec.version == 1
    assert spec.control_substeps == 10
    assert spec.sense_every == 10
    np.testing.assert_allclose(spec.start_offset(), [1.0, 0.0, 0.5])
    assert isinstance(spec.build_program(), StaticProgram)
    assert len(spec.build_obstacles()) == 0


@pytest.mark.parametrize("path", SCENARIOS, ids=lambda p: p.stem)
def test_shipped_scenarios_load(path):
    spec = load_scenario(path)
    assert spec.name == path.stem


def test_overrides_dotted_and_json_values():
    data = {"map": {"obstacles": [{"kind": "sphere", "center": [3, 0, 1], "radius": 0.3}]}}
    out = apply_overrides(data, [
        "ugv.kind=rotate", "ugv.omega=0.25", "map.obstacles.0.radius=0.5",
        "uav_start=[0.5, 0, 1]", "name=trial one",
    ])
    assert out["ugv"] == {"kind": "rotate", "omega": 0.25}
    assert out["map"]["obstacles"][0]["radius"] == 0.5
    assert out["uav_start"] == [0.5, 0, 1]
    assert out["name"] == "trial one"
    assert data["map"]["obstacles"][0]["radius"] == 0.3  # input untouched

    spec = scenario_from_dict(data, ["ugv.kind=rotate", "ugv.omega=0.25"])
    prog = spec.build_program()
    assert isinstance(prog, RotateProgram) and prog.omega == 0.25


@pytest.mark.parametrize("item, needle", [
    ("noequals", "key=value"),
    ("=3", "empty key"),
    ("map.obstacles.5.radius=1", "no such list element"),
    ("seed.x=1", "scalar"),
])
def test_bad_overrides(item, needle):
    with pytest.raises(ScenarioError, match=needle):
        apply_overrides({"seed": 0, "map": {"obstacles": []}}, [item])


def test_negative_radius_names_field():
    data = {"map": {"obstacles": [{"kind": "sphere", "center": [3, 0, 1], "radius": -0.2}]}}
    with pytest.raises(ScenarioError) as exc:
        scenario_from_dict(data)
    assert "map.obstacles.0.radius" in str(exc.value)


@pytest.mark.parametrize("data, needle", [
    ({"version": 2}, "version"),
    ({"duration": 0}, "duration"),
    ({"dt_sim": 0.002}, "dt_sim"),
    ({"unknown": 1}, "unknown"),
    ({"controller": {"rate": 300}}, "controller.rate"),
    ({"sensor": {"rate": 30}}, "sensor.rate"),
    ({"sensor": {"elevation_min_deg": 10, "elevation_max_deg": -10}}, "elevation"),
    ({"planner": {"theta_low_deg": 120}}, "planner.theta_low_deg"),
    ({"map": {"obstacles": [{"kind": "cylinder", "center": [3, 0], "radius": 0.3,
                             "z_min": 2, "z_max": 1}]}}, "z_max"),
    ({"map": {"random": {"count": 5, "pool": 3}}}, "pool"),
    ({"ugv": {"kind": "waypoints", "waypoints": []}}, "ugv.waypoints"),
    ({"task": {"kind": "hover"}}, "task"),
])
def test_invalid_fields_are_named(data, needle):
    with pytest.raises(ScenarioError, match=needle):
        scenario_from_dict(data)


def test_start_region_rejected():
    near_uav = {"map": {"obstacles": [{"kind": "sphere", "center": [1.2, 0, 0.5], "radius": 0.2}]}}
    with pytest.raises(ScenarioError, match="uav start region"):
        scenario_from_dict(near_uav)
    near_ugv = {"uav_start": [3, 0, 1],
                "map": {"obstacles": [{"kind": "box", "center": [0, 0, 0], "half_extents": [0.2, 0.2, 0.2]}]}}
    with pytest.raises(ScenarioError, match="ugv start region"):
        scenario_from_dict(near_ugv)


def test_uav_start_overrides_task_goal():
    spec = scenario_from_dict({"uav_start": [0, 0, 1.5]})
    np.testing.assert_allclose(spec.start_offset(), [0, 0, 1.5])


def test_load_errors(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        load_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  'seed': 1\n}")
    with pytest.raises(ScenarioError, match="line 2"):
        load_scenario(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[]")
    with pytest.raises(ScenarioError, match="JSON object"):
        load_scenario(arr)


def test_roundtrip_through_json(tmp_path):
    spec = load_scenario(SCENARIOS[0].parent / "land.json")
    path = tmp_path / "s.json"
    path.write_text(json.dumps(spec.model_dump(mode="json")))
    assert load_scenario(path) == spec


def test_random_obstacles_nested_and_seeded():
    base = {"seed": 4, "map": {"random": {"count": 100, "pool": 200}}}
    small = scenario_from_dict(base).build_obstacles()
    big = scenario_from_dict(base, ["map.random.count=200"]).build_obstacles()
    assert len(small) == 100 and len(big) == 200
    np.testing.assert_array_equal(small.geom, big.geom[:100])
    again = scenario_from_dict(base).build_obstacles()
    np.testing.assert_array_equal(small.geom, again.geom)
    other = scenario_from_dict(base, ["seed=5"]).build_obstacles()
    assert not np.array_equal(small.geom, other.geom)


def test_programs_built_from_spec():
    spec = scenario_from_dict({"ugv": {"kind": "waypoints", "waypoints": [[2, 0], [2, 2]], "v_max": 0.4}})
    prog = spec.build_program()
    assert isinstance(prog, WaypointProgram) and prog.waypoints == ((2.0, 0.0), (2.0, 2.0))
    spec = scenario_from_dict({"ugv": {"kind": "random_goals"}})
    assert isinstance(spec.build_program(), RandomGoalProgram)
    assert isinstance(ScenarioSpec().build_program(), StaticProgram)
