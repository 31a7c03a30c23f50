import math

import httpx
import numpy as np
import pytest

from svcplan.case_reader import load_case, load_scenarios, parse_case, serialize_case, write_scenarios
from svcplan.exceptions import CaseFetchError, CaseParseError, CaseValidationError, ScenarioError
from svcplan.network import build_scenarios
from svcplan.settings import TABLE_I_SCENARIOS


def test_parse_two_bus(two_bus_text):
    case = parse_case(two_bus_text)
    assert len(case.buses) == 2
    assert len(case.branches) == 1
    assert case.base_mva == 100.0
    branch = case.branches[0]
    assert (branch.r, branch.x, branch.tau) == (0.01, 0.1, 1.0)
    assert not branch.is_limited
    assert case.loads[1].p_base == pytest.approx(0.5)
    assert case.generators[0].p_max == pytest.approx(2.0)
    assert case.bus(2).v_min == 0.95


def test_parse_ieee30_transformers(ieee30):
    taps = sorted((br.from_bus, br.to_bus, br.tau) for br in ieee30.branches if br.is_transformer)
    assert taps == [(4, 12, 0.932), (6, 9, 0.978), (6, 10, 0.969), (28, 27, 0.968)]
    assert ieee30.bus(10).shunt_b == pytest.approx(0.19)


def test_nonexistent_bus(two_bus_text):
    text = two_bus_text.replace("1 2 0.01 0.1 0", "1 99 0.01 0.1 0")
    with pytest.raises(CaseValidationError, match="99"):
        parse_case(text)


def test_parse_error_carries_line(two_bus_text):
    text = two_bus_text.replace("2 1 50 0", "2 1 fifty 0")
    with pytest.raises(CaseParseError) as info:
        parse_case(text)
    assert info.value.line == 7


def test_missing_table(two_bus_text):
    text = two_bus_text.split("mpc.gen")[0]
    with pytest.raises(CaseParseError, match="mpc.gen"):
        parse_case(text)


def test_short_row(two_bus_text):
    text = two_bus_text.replace("1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;", "1 2 0.01 0.1;")
    with pytest.raises(CaseParseError, match="columns"):
        parse_case(text)


def test_out_of_service_rows_are_dropped(two_bus_text):
    text = two_bus_text.replace(
        "mpc.branch = [\n", "mpc.branch = [\n1 2 0.5 0.5 0 0 0 0 0 0 0 -360 360;\n"
    )
    assert len(parse_case(text).branches) == 1


def test_rate_and_phase_shift(two_bus_text):
    text = two_bus_text.replace("1 2 0.01 0.1 0 0 0 0 0 0 1", "1 2 0.01 0.1 0 150 150 150 1.02 3 1")
    branch = parse_case(text).branches[0]
    assert branch.s_max == pytest.approx(1.5)
    assert branch.tau == 1.02
    assert branch.theta_ps == pytest.approx(math.radians(3))


def test_round_trip(ieee30, two_bus_text):
    assert parse_case(serialize_case(ieee30)) == ieee30
    case = parse_case(two_bus_text)
    assert parse_case(serialize_case(case)) == case


def test_load_case_from_path(tmp_path, two_bus_text):
    path = tmp_path / "case2.m"
    path.write_text(two_bus_text)
    assert len(load_case(path).buses) == 2


def test_load_case_from_url(two_bus_text):
    def handler(request: httpx.Request) -> httpx.Response:
        assert request.url.path == "/cases/case2.m"
        return httpx.Response(200, text=two_bus_text)

    client = httpx.Client(transport=httpx.MockTransport(handler))
    case = load_case("https://example.org/cases/case2.m", client=client)
    assert len(case.branches) == 1


def test_load_case_http_error():
    client = httpx.Client(transport=httpx.MockTransport(lambda request: httpx.Response(404, text="not found")))
    with pytest.raises(CaseFetchError, match="404"):
        load_case("https://example.org/missing.m", client=client)


def test_scenario_csv(tmp_path):
    path = tmp_path / "scenarios.csv"
    scenarios = build_scenarios(TABLE_I_SCENARIOS)
    write_scenarios(scenarios, path)
    loaded = load_scenarios(path)
    assert len(loaded) == 15
    np.testing.assert_allclose(loaded.to_rows(), scenarios.to_rows())


def test_scenario_csv_missing_column(tmp_path):
    path = tmp_path / "scenarios.csv"
    path.write_text("rho,factor\n1.0,1.0\n")
    with pytest.raises(ScenarioError, match="lambda"):
        load_scenarios(path)


def test_isolated_buses_are_dropped(two_bus_text):
    text = two_bus_text.replace(
        "2 1 50 0 0 0 1 1.00 0 110 1 1.05 0.95;\n",
        "2 1 50 0 0 0 1 1.00 0 110 1 1.05 0.95;\n3 4 20 5 0 0 1 1.00 0 110 1 1.05 0.95;\n",
    )
    text = text.replace("mpc.branch = [\n", "mpc.branch = [\n2 3 0.01 0.1 0 0 0 0 0 0 1 -360 360;\n")
    case = parse_case(text)
    assert case.bus_ids == [1, 2]
    assert len(case.branches) == 1
    assert all(load.bus != 3 for load in case.loads)
