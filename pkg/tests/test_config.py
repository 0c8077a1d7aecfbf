import numpy as np
import pytest
import yaml

from hcdr.config import (ConfigError, default_params_path, dump_params, dump_scenario,
                         load_params, load_scenario, params_to_dict, scenario_path,
                         scenario_to_dict)


def test_default_params_table_values(params):
    assert params.platform_mass == 12.2
    assert params.t34_max == 80.0
    assert params.ea[0] == 24900.0
    np.testing.assert_array_equal(params.link_com_offset[1], [0.0, 0.065, 0.0])


def test_total_translating_mass(params):
    total = params.platform_mass + params.pendulum_mass.sum() + params.link_mass.sum()
    assert total == pytest.approx(14.38, abs=1e-12)


def test_cable_groups_partition(params):
    members = sorted(i for g in params.cable_groups for i in g)
    assert members == list(range(1, 13))
    assert params.cable_groups == ((5, 6, 11, 12), (1, 2, 7, 8), (4, 10), (3, 9))


def _edit(path, tmp_path, func, name="edited.yaml"):
    data = yaml.safe_load(open(path))
    func(data)
    out = tmp_path / name
    out.write_text(yaml.safe_dump(data))
    return out


def test_negative_platform_mass_named(tmp_path):
    bad = _edit(default_params_path(), tmp_path, lambda d: d["platform"].__setitem__("mass", -1))
    with pytest.raises(ConfigError, match="platform_mass nonpositive"):
        load_params(bad)


def test_groups_must_partition(tmp_path):
    bad = _edit(default_params_path(), tmp_path,
                lambda d: d["cables"].__setitem__("groups", [[1, 2, 3, 4], [5, 6, 7, 8], [9, 10], [11, 11]]))
    with pytest.raises(ConfigError, match="partition"):
        load_params(bad)


def test_unparseable_file(tmp_path):
    bad = tmp_path / "broken.yaml"
    bad.write_text("frame: [1, 2\n")
    with pytest.raises(ConfigError, match="cannot parse"):
        load_params(bad)


def test_missing_file_names_path(tmp_path):
    with pytest.raises(ConfigError, match="nowhere.yaml"):
        load_params(tmp_path / "nowhere.yaml")


def test_scenario1_values(scenario1):
    assert scenario1.sample_time == 0.0002
    np.testing.assert_array_equal(scenario1.waypoints[-1], [0.35, 0.5, 0.1])
    np.testing.assert_array_equal(scenario1.waypoints[0], [0.0, 0.334, 0.0])
    np.testing.assert_array_equal(scenario1.k_dp_a, [500] * 5)
    np.testing.assert_array_equal(scenario1.limits.qd_max, [3, 3, 25, 25, 25])
    np.testing.assert_array_equal(scenario1.limits.dqd_min, [-30, -30, -250, -250, -250])
    assert scenario1.limits.eps_a == 2.22e-16
    assert scenario1.n_steps == 5000
    pulses = {(c.index, c.amplitude, c.t_on, c.t_off) for c in scenario1.disturbance}
    assert pulses == {(3, 20.0, 0.1, 0.3), (4, 2.0, 0.1, 0.3), (5, 2.0, 0.1, 0.3)}


def test_scenario2_gains(scenario2):
    np.testing.assert_array_equal(scenario2.kp, [1, 1, 0.001, 0.001, 1.5, 1.8, 1.5])
    np.testing.assert_array_equal(scenario2.kd, [10, 30, 0.1, 0.1, 0.05, 0.09, 0.05])
    np.testing.assert_array_equal(scenario2.ki, [1, 1, 0.1, 0.1, 2, 6.75, 5])
    assert scenario2.control_on


def test_reversed_time_rejected(tmp_path):
    def flip(d):
        d["time"]["start"], d["time"]["end"] = 1.0, 0.0
    with pytest.raises(ConfigError, match="t_end"):
        load_scenario(_edit(scenario_path("scenario1"), tmp_path, flip))


def test_disturbance_window_outside_horizon(tmp_path):
    def late(d):
        d["disturbance"][0]["t_off"] = 2.0
    with pytest.raises(ConfigError, match="window"):
        load_scenario(_edit(scenario_path("scenario1"), tmp_path, late))


def test_toaj_scenario_zeroes_unactuated_damping(tmp_path):
    def toaj(d):
        d["planner"]["method"] = "toaj"
    s = load_scenario(_edit(scenario_path("scenario1"), tmp_path, toaj))
    np.testing.assert_array_equal(s.k_dp_u, 0.0)


def test_params_round_trip_bitwise(params, tmp_path):
    path = tmp_path / "p.yaml"
    dump_params(params, path)
    assert params_to_dict(load_params(path)) == params_to_dict(params)


@pytest.mark.parametrize("name", ["scenario1", "scenario2"])
def test_scenario_round_trip_bitwise(name, tmp_path):
    s = load_scenario(name)
    path = tmp_path / "s.yaml"
    dump_scenario(s, path)
    assert scenario_to_dict(load_scenario(path)) == scenario_to_dict(s)
