import json

import pandas as pd
import pytest

from svcplan.bnb import SOLVER_LOG_FIELDS, solve_misocp
from svcplan.case_reader import serialize_case, write_scenarios
from svcplan.cli import build_parser, main
from svcplan.conic import LOG_FIELDS
from svcplan.exceptions import MissingCellError
from svcplan.micp import SvcSpec, WeightScheme, build_micp
from svcplan.network import build_scenarios, rescale_base_load
from svcplan.planner import (
    RunCell,
    RunConfig,
    RunReport,
    check_reference,
    data_dialect,
    emit_plot_data,
    largest_reduction,
    reference_for,
    run,
)

from conftest import two_bus


@pytest.fixture
def inputs(tmp_path):
    case_path = tmp_path / "case2.m"
    case_path.write_text(serialize_case(two_bus(p_load=0.5, q_load=0.2)))
    scenario_path = tmp_path / "scenarios.csv"
    write_scenarios(build_scenarios([(0.5, 0.8), (0.5, 1.2)]), scenario_path)
    return str(case_path), str(scenario_path)


def test_run_writes_outputs(tmp_path, inputs):
    case, scenarios = inputs
    out = tmp_path / "out"
    report = run(RunConfig(case=case, scenarios=scenarios, nv=[1], out=str(out), plot_scenarios=[2], validate=True))

    assert report.failed == []
    for name in ("report.json", "table3.csv", "nodes_case1_nv1.csv", "loss_by_scenario.csv", "voltage_profile_s2.csv"):
        assert (out / name).exists(), name

    table = pd.read_csv(out / "table3.csv")
    assert list(table["n_v"]) == [0, 1]
    assert str(table["locations"][1]) == "2"
    assert table["loss_mw"][1] < table["loss_mw"][0]

    loss = pd.read_csv(out / "loss_by_scenario.csv")
    assert list(loss["scenario"]) == [1, 2]
    assert (loss["loss_with_svc"] < loss["loss_no_svc"]).all()
    profile = pd.read_csv(out / "voltage_profile_s2.csv")
    assert list(profile["bus"]) == [1, 2]

    data = json.loads((out / "report.json").read_text())
    assert data["cells"][0]["result"]["chosen_buses"] == [2]
    assert data["cells"][0]["validation"]["diverged"] == []
    assert largest_reduction(report, "case1", 1) == 2
    assert data["data_dialect"] is None
    assert data["cells"][0]["reference"] is None

    with open(out / "solver_case1_nv0.csv") as f:
        assert tuple(f.readline().strip().split(",")) == LOG_FIELDS
    with open(out / "solver_case1_nv1.csv") as f:
        assert tuple(f.readline().strip().split(",")) == SOLVER_LOG_FIELDS
    assert table["loss_pu"][1] * 100.0 == pytest.approx(table["loss_mw"][1])
    assert table["qloss_pu"][1] * 100.0 == pytest.approx(table["qloss_mvar"][1])


def test_run_is_deterministic(inputs):
    case, scenarios = inputs
    config = RunConfig(case=case, scenarios=scenarios, nv=[1])
    assert run(config).to_json() == run(config).to_json()


def test_several_weight_schemes(tmp_path, inputs):
    case, scenarios = inputs
    weights = [("case1", WeightScheme.preset("case1")), ("case2", WeightScheme.preset("case2"))]
    report = run(RunConfig(case=case, scenarios=scenarios, weights=weights, nv=[1], out=str(tmp_path), workers=2))
    assert sorted(report.baselines) == ["case1", "case2"]
    assert report.cell("case2", 1).ok
    assert (tmp_path / "case2" / "loss_by_scenario.csv").exists()
    assert list(report.table3()["weights"]) == ["case1", "case1", "case2", "case2"]


def test_baseline_only(inputs):
    case, scenarios = inputs
    report = run(RunConfig(case=case, scenarios=scenarios, nv=[]))
    assert report.cells == []
    baseline = report.cell("case1", 0)
    assert baseline.result.chosen_buses == ()
    assert len(report.table3()) == 1


def test_missing_cells(tmp_path, inputs):
    case, scenarios = inputs
    report = run(RunConfig(case=case, scenarios=scenarios, nv=[1]))
    with pytest.raises(MissingCellError):
        report.cell("case1", 3)
    with pytest.raises(MissingCellError):
        emit_plot_data(report, [99], tmp_path)
    assert not (tmp_path / "loss_by_scenario.csv").exists()


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(nv=[-1])
    with pytest.raises(ValueError):
        RunConfig(svc_range=(0.3, 0.0))
    with pytest.raises(ValueError):
        RunConfig(weights=[])


def test_parser_defaults():
    args = build_parser().parse_args([])
    assert args.nv == [1, 2, 3, 4, 5]
    assert args.out == "out"
    assert args.svc_range == (0.0, 0.3)
    assert build_parser().parse_args(["--nv", ""]).nv == []


def test_cli(tmp_path, inputs, capsys):
    case, scenarios = inputs
    code = main(["--case", case, "--scenarios", scenarios, "--nv", "1", "--out", str(tmp_path), "-q"])
    assert code == 0
    assert "case1" in capsys.readouterr().out
    assert (tmp_path / "report.json").exists()


def test_cli_rejects_bad_range():
    with pytest.raises(SystemExit):
        main(["--svc-range", "abc"])


def test_cli_missing_case(tmp_path):
    assert main(["--case", str(tmp_path / "missing.m"), "--out", str(tmp_path), "-q"]) == 2


def test_cli_bad_weights(tmp_path):
    assert main(["--weights", "case9", "--out", str(tmp_path), "-q"]) == 2


def test_parser_solver_options():
    args = build_parser().parse_args(["--time-limit", "30", "--base-load", "260,116"])
    assert args.time_limit == 30.0
    assert args.base_load == (260.0, 116.0)
    assert build_parser().parse_args([]).time_limit is None


def test_budgets_are_warm_started_in_order(inputs):
    case, scenarios = inputs
    report = run(RunConfig(case=case, scenarios=scenarios, nv=[2, 1]))
    assert [c.n_v for c in report.cells] == [1, 2]
    objectives = [report.cell("case1", n).result.objective for n in (0, 1, 2)]
    assert objectives[1] <= objectives[0] + 1e-9
    assert objectives[2] <= objectives[1] + 1e-9
    assert report.cell("case1", 2).result.chosen_buses == (2,)


def test_base_load_option(inputs):
    case, scenarios = inputs
    config = RunConfig(case=case, scenarios=scenarios, base_load=(40.0, 10.0))
    p, q = config.load_case().total_load()
    assert (p, q) == (pytest.approx(40.0), pytest.approx(10.0))
    with pytest.raises(ValueError):
        RunConfig(base_load=(260.0, 0.0))


def test_data_dialect(ieee30):
    dialect = data_dialect(ieee30)
    assert dialect["base_load_mw"] == pytest.approx(283.4)
    assert dialect["reference_base_load_mw"] == 260.0
    assert not dialect["matches_reference"]
    assert data_dialect(rescale_base_load(ieee30, 260.0, 116.0))["matches_reference"]


def test_reference_for():
    config = RunConfig()
    expected = reference_for(config, "case1", WeightScheme.preset("case1"), 1)
    assert expected["locations"] == (21,)
    assert reference_for(config, "case3", WeightScheme.preset("case3"), 5)["peak_scenario"] == 13
    assert reference_for(config, "case1", WeightScheme.preset("case1"), 4) is None
    assert reference_for(config, "case1", WeightScheme(1.0, 1.0), 1) is None
    assert reference_for(RunConfig(case="other.m"), "case1", WeightScheme.preset("case1"), 1) is None
    assert reference_for(RunConfig(svc_range=(0.0, 0.5)), "case1", WeightScheme.preset("case1"), 1) is None


def test_check_reference_grades_other_locations(triangle_case, single_scenario):
    weights = WeightScheme.preset("case1")
    program, index = build_micp(triangle_case, single_scenario, weights, SvcSpec(n_v=1))
    result = solve_misocp(program, index)
    (chosen,) = result.chosen_buses
    other = 5 - chosen

    check = check_reference({"loss_mw": result.loss_mw, "locations": (other,)}, result, program, index)
    assert check["loss_ok"]
    assert not check["locations_match"]
    assert check["chosen_not_worse"]
    assert check["reference_objective"] >= result.objective - 1e-6
    assert sorted(check["placements"]) == ["2", "3"]
    assert check["best_placement"] == chosen
    assert check["matches_enumeration"]
    assert check["deviates"]

    base_program, base_index = build_micp(triangle_case, single_scenario, weights, SvcSpec(n_v=0))
    baseline = solve_misocp(base_program, base_index)
    expected = {"loss_mw": result.loss_mw, "locations": (chosen,), "peak_scenario": 1}
    check = check_reference(expected, result, program, index, baseline=baseline)
    assert check["locations_match"]
    assert "chosen_not_worse" not in check
    assert check["peak_ok"]
    assert not check["deviates"]


def test_check_reference_flags_loss(triangle_case, single_scenario):
    program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case1"), SvcSpec(n_v=1))
    result = solve_misocp(program, index)
    check = check_reference({"loss_mw": 2.0 * result.loss_mw}, result, program, index)
    assert check["loss_error"] == pytest.approx(0.5)
    assert not check["loss_ok"]
    assert check["deviates"]


def test_largest_reduction_needs_results():
    report = RunReport(
        config=RunConfig(),
        baselines={"case1": RunCell("case1", 0, error="baseline failed")},
        cells=[RunCell("case1", 1, error="no solution")],
    )
    with pytest.raises(MissingCellError):
        largest_reduction(report, "case1", 1)
