import numpy as np
import pytest

from svcplan.model_index import DELTA, PG, QL_AUX, QV, W, Z, allocate_index
from svcplan.network import build_scenarios, candidate_buses


def test_ieee30_layout(ieee30, single_scenario):
    index = allocate_index(ieee30, single_scenario, candidate_buses(ieee30))
    # 2G + 5K + 3B + 2C + zero-resistance auxiliaries, then C deltas
    assert index.n_variables == 12 + 205 + 90 + 48 + 7 + 24
    assert len(index.delta_positions()) == 24
    assert index.delta_positions()[0] == index.n_variables - 24
    assert len(index.positions(QL_AUX, 0)) == 7


def test_layout_grows_per_scenario(ieee30):
    scenarios = build_scenarios([(0.5, 1.0), (0.5, 1.2)])
    index = allocate_index(ieee30, scenarios, candidate_buses(ieee30))
    assert index.n_variables == 2 * 362 + 24
    assert index.position(DELTA, 3, 0) == index.position(DELTA, 3, 1)
    assert index.position(W, 3, 0) != index.position(W, 3, 1)


def test_key_position_bijection(triangle_case, single_scenario):
    index = allocate_index(triangle_case, single_scenario, [2, 3])
    positions = [index.position(*key) for key in index.keys()]
    assert positions == list(range(index.n_variables))
    assert all(index.key(p) == key for p, key in zip(positions, index.keys()))
    assert len(set(index.names())) == index.n_variables


def test_blocks_partition(triangle_case, single_scenario):
    index = allocate_index(triangle_case, single_scenario, [2, 3])
    covered = np.concatenate([np.arange(b.start, b.stop) for b in index.blocks])
    np.testing.assert_array_equal(covered, np.arange(index.n_variables))


def test_candidate_quantities(two_bus_case, single_scenario):
    index = allocate_index(two_bus_case, single_scenario, [2])
    assert len(index.delta_positions()) == 1
    assert (QV, 2, 0) in index
    assert (Z, 1, 0) not in index
    assert list(index.positions(PG, 0)) == [0]


def test_unknown_candidate(two_bus_case, single_scenario):
    with pytest.raises(ValueError, match="7"):
        allocate_index(two_bus_case, single_scenario, [2, 7])
