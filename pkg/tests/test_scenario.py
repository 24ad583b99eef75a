import numpy as np
import pytest
import yaml

from switchopt.scenario import (Scenario, ScenarioError, family_fields,
                                load_scenario, scenario_from_dict)

MINI_FIG2 = {
    "name": "mini", "experiment": "figure2", "n": 4, "topology": "path",
    "M": 2, "d": 20.0, "seed": 1, "delta": 0.06, "n0": 1,
    "horizon": 30.0, "step": 0.001, "dynamics": "hihbm",
    "k_lo": 0.01, "k_hi": 35.5, "schedule_seed": 2, "sparse_delta": 0.012,
}


def test_mini_scenario_loads():
    scn = scenario_from_dict(dict(MINI_FIG2))
    assert scn.name == "mini"
    assert scn.tie_rule == "take_hi"
    prob = scn.problem()
    assert prob.n == 4 and prob.M == 2 and prob.d == 20.0
    spec = scn.dynamics_spec()
    assert spec.kind == "hihbm" and spec.bounds.hi == 35.5


def test_unknown_field_rejected():
    data = dict(MINI_FIG2, wobble=3)
    with pytest.raises(ScenarioError, match="wobble"):
        scenario_from_dict(data)


def test_missing_required_field_named():
    data = dict(MINI_FIG2)
    del data["d"]
    with pytest.raises(ScenarioError, match="'d'"):
        scenario_from_dict(data)


def test_missing_experiment_field_named():
    data = dict(MINI_FIG2)
    del data["sparse_delta"]
    with pytest.raises(ScenarioError, match="sparse_delta"):
        scenario_from_dict(data)


def test_bad_types_rejected():
    with pytest.raises(ScenarioError, match="'n'"):
        scenario_from_dict(dict(MINI_FIG2, n="twenty"))
    with pytest.raises(ScenarioError, match="'delta'"):
        scenario_from_dict(dict(MINI_FIG2, delta="fast"))
    with pytest.raises(ScenarioError, match="'dynamics'"):
        scenario_from_dict(dict(MINI_FIG2, dynamics="nesterov"))
    with pytest.raises(ScenarioError, match="'topology'"):
        scenario_from_dict(dict(MINI_FIG2, topology="ring"))
    with pytest.raises(ScenarioError, match="tie_rule"):
        scenario_from_dict(dict(MINI_FIG2, tie_rule="coin"))


def test_hbm_requires_gain():
    data = dict(MINI_FIG2, dynamics="hbm")
    del data["k_lo"], data["k_hi"]
    with pytest.raises(ScenarioError, match="gain"):
        scenario_from_dict(data)
    data["gain"] = 5.0
    assert scenario_from_dict(data).dynamics_spec().gain == 5.0


def test_hash_stable_and_sensitive():
    a = scenario_from_dict(dict(MINI_FIG2))
    b = scenario_from_dict(dict(MINI_FIG2))
    assert a.hash == b.hash
    c = scenario_from_dict(dict(MINI_FIG2, seed=2))
    assert a.hash != c.hash


def test_explicit_coefficients_roundtrip():
    scn = scenario_from_dict(dict(MINI_FIG2))
    fam = scn.family()
    data = dict(MINI_FIG2)
    data.update({k: v for k, v in family_fields(fam).items() if k.startswith(("P_", "b_"))})
    scn2 = scenario_from_dict(data)
    fam2 = scn2.family()
    for s in (1, 2):
        np.testing.assert_array_equal(fam.mode(s).curvature, fam2.mode(s).curvature)
        np.testing.assert_array_equal(fam.mode(s).linear, fam2.mode(s).linear)


def test_explicit_coefficients_must_be_complete():
    data = dict(MINI_FIG2)
    data["P_1"] = [1.0, 1.0, 1.0, 1.0]
    with pytest.raises(ScenarioError, match="P_1..P_M"):
        scenario_from_dict(data)


def test_explicit_coefficients_dimension_checked():
    scn = scenario_from_dict(dict(MINI_FIG2))
    data = dict(MINI_FIG2)
    data.update({k: v for k, v in family_fields(scn.family()).items()
                 if k.startswith(("P_", "b_"))})
    data["b_2"] = [1.0, 2.0]
    with pytest.raises(ScenarioError, match="b_2"):
        scenario_from_dict(data)


def test_initial_state_projection():
    data = dict(MINI_FIG2, initial_q=[1.0, 1.0, 1.0, 1.0])
    scn = scenario_from_dict(data)
    prob = scn.problem()
    x0 = scn.initial_state(prob)
    assert x0.z.q.sum() == pytest.approx(20.0, abs=1e-9)
    assert x0.z.p.sum() == pytest.approx(0.0, abs=1e-12)
    assert x0.tau == 1.0


def test_initial_state_random_is_seeded():
    data = dict(MINI_FIG2, initial_q="random", ic_seed=4, ic_q_scale=3.0)
    scn = scenario_from_dict(data)
    prob = scn.problem()
    a = scn.initial_state(prob)
    b = scn.initial_state(prob)
    np.testing.assert_array_equal(a.z.q, b.z.q)
    offset = np.linalg.norm(a.z.q - prob.family.kkt(1).q_star)
    assert offset == pytest.approx(3.0, rel=0.2)


def test_shipped_scenarios_load(repo_root):
    for name in ("figure1", "figure2", "figure3"):
        scn = load_scenario(repo_root / "scenarios" / f"{name}.yaml")
        assert scn.experiment == name


def test_custom_topology_via_edges_file(tmp_path):
    edges = tmp_path / "relay.txt"
    edges.write_text("0 1\n1 2\n2 3\n")
    data = dict(MINI_FIG2, topology="custom", edges_file=str(edges))
    prob = scenario_from_dict(data).problem()
    assert prob.lap.L[0, 0] == 1 and prob.lap.L[1, 1] == 2


def test_custom_topology_requires_edges_file():
    with pytest.raises(ScenarioError, match="edges_file"):
        scenario_from_dict(dict(MINI_FIG2, topology="custom"))


def test_non_mapping_rejected(tmp_path):
    f = tmp_path / "bad.yaml"
    f.write_text("- 1\n- 2\n")
    with pytest.raises(ScenarioError, match="flat mapping"):
        load_scenario(f)


def test_yaml_syntax_error(tmp_path):
    f = tmp_path / "bad.yaml"
    f.write_text("name: [unclosed\n")
    with pytest.raises(ScenarioError, match="YAML"):
        load_scenario(f)
