import io
import math

import numpy as np
import pytest

from svcplan.bnb import (
    NODE_LOG_FIELDS,
    SOLVER_LOG_FIELDS,
    BnbSettings,
    Node,
    accept_incumbent,
    branch,
    enumerate_placements,
    evaluate_allocation,
    is_integral,
    round_heuristic,
    solve_misocp,
)
from svcplan.conic import ConicSolution, ResidualReport, SolveStatus, solve, solve_with_fixings
from svcplan.exceptions import ContractViolation, PreconditionError
from svcplan.micp import SvcSpec, WeightScheme, build_micp
from svcplan.model_index import allocate_index
from svcplan.network import Branch, Bus, Generator, Load, NetworkCase

from conftest import two_bus

TIGHT = BnbSettings(abs_gap=1e-9, rel_gap=1e-9)


def _relaxation(index, deltas, objective=1.0) -> ConicSolution:
    x = np.zeros(index.n_variables)
    x[index.delta_positions()] = deltas
    return ConicSolution(
        status=SolveStatus.OPTIMAL,
        x=x,
        y=np.zeros(0),
        dual_cone=np.zeros(index.n_variables),
        objective=objective,
        residuals=ResidualReport(0.0, 0.0, 0.0),
    )


def _enumerate(program, index, n_v):
    """Best objective over every delta assignment with at most n_v ones."""
    deltas = [int(p) for p in index.delta_positions()]
    best = math.inf
    for mask in range(2 ** len(deltas)):
        if bin(mask).count("1") > n_v:
            continue
        fixings = {p: (mask >> k) & 1 for k, p in enumerate(deltas)}
        solution = solve_with_fixings(program, fixings)
        if solution.is_optimal:
            best = min(best, solution.objective)
    return best


@pytest.fixture
def triangle_index(triangle_case, single_scenario):
    return allocate_index(triangle_case, single_scenario, [2, 3])


def test_settings_validation():
    with pytest.raises(ValueError):
        BnbSettings(rel_gap=0.0)
    with pytest.raises(ValueError):
        BnbSettings(integrality_tol=0.5)
    with pytest.raises(ValueError):
        BnbSettings(workers=0)
    assert BnbSettings.from_dict(TIGHT.to_dict()) == TIGHT


def test_branch_on_most_fractional(triangle_index):
    node = Node(0.5, 4, 2, {})
    down, up = branch(node, _relaxation(triangle_index, [0.5, 0.2], objective=0.7), BnbSettings(), triangle_index)
    pos = triangle_index.delta_positions()[0]
    assert down.fixings == {pos: 0}
    assert up.fixings == {pos: 1}
    assert (down.id, up.id) == (-1, -1)
    assert down.depth == up.depth == 3
    assert down.bound == up.bound == 0.7


def test_branch_tie_goes_to_lowest_bus(triangle_index):
    down, _ = branch(Node(0.0, 0), _relaxation(triangle_index, [0.2, 0.8]), BnbSettings(), triangle_index)
    assert list(down.fixings) == [triangle_index.delta_positions()[0]]


def test_branch_skips_fixed_deltas(triangle_index):
    first, second = triangle_index.delta_positions()
    node = Node(0.0, 1, 1, {int(first): 1})
    down, up = branch(node, _relaxation(triangle_index, [1.0, 0.4]), BnbSettings(), triangle_index)
    assert down.fixings == {int(first): 1, int(second): 0}
    assert up.fixings == {int(first): 1, int(second): 1}


def test_branch_on_integral_relaxation(triangle_index):
    relaxation = _relaxation(triangle_index, [1.0, 0.0])
    assert is_integral(relaxation, triangle_index, BnbSettings())
    with pytest.raises(ContractViolation):
        branch(Node(0.0, 0), relaxation, BnbSettings(), triangle_index)


def test_round_heuristic(meshed_case, single_scenario):
    svc = SvcSpec(n_v=2)
    program, index = build_micp(meshed_case, single_scenario, WeightScheme.preset("case1"), svc)
    solution = round_heuristic(_relaxation(index, [0.9, 0.6, 0.1]), index, svc, BnbSettings(), program)
    assert solution is not None
    np.testing.assert_array_equal(solution.x[index.delta_positions()], [1.0, 1.0, 0.0])

    # values at or below the integrality tolerance stay off
    solution = round_heuristic(_relaxation(index, [0.0, 0.7, 0.0]), index, svc, BnbSettings(), program)
    np.testing.assert_array_equal(solution.x[index.delta_positions()], [0.0, 1.0, 0.0])


def test_svc_goes_to_the_reactive_load(single_scenario):
    case = two_bus(p_load=0.5, q_load=0.2)
    svc = SvcSpec(n_v=1)
    program, index = build_micp(case, single_scenario, WeightScheme.preset("case1"), svc)
    result = solve_misocp(program, index, TIGHT, svc)
    assert result.status == "optimal"
    assert result.chosen_buses == (2,)
    fixed = solve_with_fixings(program, {int(index.delta_positions()[0]): 1})
    assert result.objective == pytest.approx(fixed.objective, abs=1e-6)
    assert result.scenarios[0].loss_mw == pytest.approx(result.scenarios[0].loss_pu * 100.0)
    assert 0.0 <= result.scenarios[0].susceptance[2] <= 0.3
    assert result.max_cone_mismatch < 1e-5


def test_matches_enumeration(triangle_case, single_scenario):
    svc = SvcSpec(n_v=1)
    program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case2"), svc)
    result = solve_misocp(program, index, TIGHT, svc)
    assert result.status == "optimal"
    assert result.objective == pytest.approx(_enumerate(program, index, 1), abs=1e-6)
    assert len(result.chosen_buses) <= 1


def test_more_svcs_never_hurt(triangle_case, single_scenario):
    objectives = []
    for n_v in range(3):
        svc = SvcSpec(n_v=n_v)
        program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case1"), svc)
        result = solve_misocp(program, index, TIGHT, svc)
        assert result.status == "optimal"
        assert len(result.chosen_buses) <= n_v
        objectives.append(result.objective)
    assert objectives[1] <= objectives[0] + 1e-7
    assert objectives[2] <= objectives[1] + 1e-7


def test_zero_budget_is_the_baseline(triangle_case, single_scenario):
    svc = SvcSpec(n_v=0)
    program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case1"), svc)
    result = solve_misocp(program, index, TIGHT, svc)
    baseline = solve_with_fixings(program, {int(p): 0 for p in index.delta_positions()})
    assert result.chosen_buses == ()
    assert result.objective == pytest.approx(baseline.objective, abs=1e-7)
    assert result.breakdown["deviation"] == 0.0
    assert result.breakdown["loss"] == pytest.approx(result.loss_mw / 100.0, rel=1e-6)


def test_node_log(triangle_case, single_scenario):
    svc = SvcSpec(n_v=1)
    program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case1"), svc)
    log = io.StringIO()
    result = solve_misocp(program, index, TIGHT, svc, node_log=log)
    lines = log.getvalue().splitlines()
    assert lines[0] == ",".join(NODE_LOG_FIELDS)
    assert len(lines) - 1 >= result.nodes


def test_requires_integer_variables(two_bus_case, single_scenario):
    program, index = build_micp(two_bus_case, single_scenario, WeightScheme.preset("case1"), SvcSpec(), candidates=[])
    with pytest.raises(ContractViolation):
        solve_misocp(program, index)


def test_result_serializes_without_time(triangle_case, single_scenario):
    svc = SvcSpec(n_v=1)
    program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case1"), svc)
    data = solve_misocp(program, index, TIGHT, svc).to_dict()
    assert "wall_time" not in data
    assert data["bus_ids"] == [1, 2, 3]
    assert len(data["scenarios"][0]["voltage"]) == 3


def _split_feeders() -> NetworkCase:
    """Two identical radial feeders from bus 1; one relaxed SVC splits evenly between them."""
    return NetworkCase(
        base_mva=100.0,
        buses=(Bus(1, 0.95, 1.05), Bus(2, 0.95, 1.05), Bus(3, 0.95, 1.05)),
        branches=(Branch(1, 2, r=0.02, x=0.08), Branch(1, 3, r=0.02, x=0.08)),
        generators=(Generator(1, 0.0, 3.0, -3.0, 3.0),),
        loads=(Load(1, 0.0, 0.0), Load(2, 0.4, 0.3), Load(3, 0.4, 0.3)),
    )


def _solution(status, primal, objective=1.0) -> ConicSolution:
    return ConicSolution(
        status=status,
        x=np.zeros(1),
        y=np.zeros(0),
        dual_cone=np.zeros(1),
        objective=objective,
        residuals=ResidualReport(primal, 1e-3, 1e-3),
    )


def test_svc_settings_come_from_the_index(single_scenario):
    svc = SvcSpec(b_min=0.0, b_max=0.1, n_v=1)
    program, index = build_micp(two_bus(p_load=0.5, q_load=0.2), single_scenario, WeightScheme.preset("case1"), svc)
    assert index.svc == svc
    result = solve_misocp(program, index, TIGHT)
    assert result.chosen_buses == (2,)
    assert result.scenarios[0].susceptance[2] <= 0.1 + 1e-9
    with pytest.raises(ContractViolation):
        solve_misocp(program, index, TIGHT, SvcSpec(n_v=1))


def test_node_limit_reports_open_gap(single_scenario):
    program, index = build_micp(_split_feeders(), single_scenario, WeightScheme.preset("case1"), SvcSpec(n_v=1))
    root = solve(program)
    assert root.is_optimal
    deltas = root.x[index.delta_positions()]
    assert np.all((deltas > 0.05) & (deltas < 0.95))

    result = solve_misocp(program, index, BnbSettings(abs_gap=1e-9, rel_gap=1e-9, max_nodes=1))
    assert result.status == "node_limit"
    assert result.nodes == 1
    # the rounding heuristic supplies the incumbent
    assert len(result.chosen_buses) == 1
    assert result.lower_bound == pytest.approx(root.objective, rel=1e-6)
    assert result.gap == pytest.approx(result.objective - result.lower_bound)
    assert result.gap > 1e-6
    assert result.to_dict()["gap"] == pytest.approx(result.gap)


def test_time_limit_stops_after_the_root(single_scenario):
    program, index = build_micp(_split_feeders(), single_scenario, WeightScheme.preset("case1"), SvcSpec(n_v=1))
    result = solve_misocp(program, index, BnbSettings(abs_gap=1e-9, rel_gap=1e-9, time_limit=1e-9))
    assert result.status == "time_limit"
    assert result.nodes == 1
    assert result.gap > 0.0
    with pytest.raises(ValueError):
        BnbSettings(time_limit=0.0)


def test_gap_is_never_below_zero(triangle_case, single_scenario):
    program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case2"), SvcSpec(n_v=1))
    settings = BnbSettings()
    result = solve_misocp(program, index, settings)
    assert result.status == "optimal"
    assert result.lower_bound <= result.objective
    assert 0.0 <= result.gap <= max(settings.abs_gap, settings.rel_gap * abs(result.objective)) + 1e-7


def test_start_allocation(triangle_case, single_scenario):
    program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case1"), SvcSpec(n_v=1))
    cold = solve_misocp(program, index, TIGHT)
    warm = solve_misocp(program, index, TIGHT, start=[3])
    assert warm.objective == pytest.approx(cold.objective, abs=1e-7)
    assert warm.chosen_buses == cold.chosen_buses
    with pytest.raises(PreconditionError):
        solve_misocp(program, index, TIGHT, start=[2, 3])
    with pytest.raises(PreconditionError):
        solve_misocp(program, index, TIGHT, start=[1])


def test_solver_log(triangle_case, single_scenario):
    program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case1"), SvcSpec(n_v=1))
    log = io.StringIO()
    result = solve_misocp(program, index, TIGHT, solver_log=log)
    lines = log.getvalue().splitlines()
    assert lines[0] == ",".join(SOLVER_LOG_FIELDS)
    nodes = {int(line.split(",")[0]) for line in lines[1:]}
    assert 0 in nodes
    assert len(nodes) <= result.nodes


def test_accept_incumbent():
    optimal = _solution(SolveStatus.OPTIMAL, 0.0)
    assert accept_incumbent(optimal) is optimal
    early = _solution(SolveStatus.ITERATION_LIMIT, 1e-10)
    assert accept_incumbent(early) is early
    # relaxed enough for a bound, not for an incumbent
    assert accept_incumbent(_solution(SolveStatus.ITERATION_LIMIT, 1e-6)) is None
    assert accept_incumbent(_solution(SolveStatus.INFEASIBLE, 0.0)) is None


def test_enumerate_placements(triangle_case, single_scenario):
    program, index = build_micp(triangle_case, single_scenario, WeightScheme.preset("case2"), SvcSpec(n_v=1))
    placements = enumerate_placements(program, index)
    assert sorted(placements) == [2, 3]
    for bus, objective in placements.items():
        assert objective == pytest.approx(evaluate_allocation(program, index, [bus]).objective)
    result = solve_misocp(program, index, TIGHT)
    assert result.objective <= min(placements.values()) + 1e-7
    assert evaluate_allocation(program, index, [2, 3]) is None
    with pytest.raises(PreconditionError):
        evaluate_allocation(program, index, [1])
