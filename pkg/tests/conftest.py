import pytest

from svcplan import build_scenarios, ieee30_case
from svcplan.network import Branch, Bus, Generator, Load, NetworkCase
from svcplan.settings import TABLE_I_SCENARIOS

TWO_BUS_TEXT = """function mpc = case2
mpc.version = '2';
mpc.baseMVA = 100;

mpc.bus = [
1 3 0 0 0 0 1 1.00 0 110 1 1.05 0.95;
2 1 50 0 0 0 1 1.00 0 110 1 1.05 0.95;
];

mpc.gen = [
1 0 0 200 -200 1.00 100 1 200 0;
];

mpc.branch = [
1 2 0.01 0.1 0 0 0 0 0 0 1 -360 360;
];
"""


def two_bus(p_load: float = 0.5, q_load: float = 0.0, r: float = 0.01, x: float = 0.1) -> NetworkCase:
    return NetworkCase(
        base_mva=100.0,
        buses=(Bus(1, 0.95, 1.05), Bus(2, 0.95, 1.05)),
        branches=(Branch(1, 2, r=r, x=x),),
        generators=(Generator(1, 0.0, 2.0, -2.0, 2.0),),
        loads=(Load(1, 0.0, 0.0), Load(2, p_load, q_load)),
    )


@pytest.fixture
def two_bus_case() -> NetworkCase:
    """Generator at bus 1, 0.5 p.u. real load at bus 2."""
    return two_bus()


@pytest.fixture
def two_bus_text() -> str:
    return TWO_BUS_TEXT


@pytest.fixture
def triangle_case() -> NetworkCase:
    return NetworkCase(
        base_mva=100.0,
        buses=(Bus(1, 0.95, 1.05), Bus(2, 0.95, 1.05), Bus(3, 0.95, 1.05)),
        branches=(
            Branch(1, 2, r=0.02, x=0.08, b_ch=0.02),
            Branch(2, 3, r=0.02, x=0.08, b_ch=0.02),
            Branch(1, 3, r=0.03, x=0.10, b_ch=0.02),
        ),
        generators=(Generator(1, 0.0, 3.0, -3.0, 3.0),),
        loads=(Load(1, 0.0, 0.0), Load(2, 0.4, 0.25), Load(3, 0.5, 0.3)),
    )


@pytest.fixture
def meshed_case() -> NetworkCase:
    """Four buses, two loops and one lossless tapped transformer (3-4)."""
    return NetworkCase(
        base_mva=100.0,
        buses=(Bus(1, 0.94, 1.06), Bus(2, 0.94, 1.06), Bus(3, 0.94, 1.06), Bus(4, 0.94, 1.06)),
        branches=(
            Branch(1, 2, r=0.02, x=0.08, b_ch=0.02),
            Branch(1, 3, r=0.02, x=0.08, b_ch=0.02),
            Branch(2, 3, r=0.03, x=0.10, b_ch=0.01),
            Branch(3, 4, r=0.0, x=0.15, tau=0.98),
            Branch(2, 4, r=0.03, x=0.12, b_ch=0.01),
        ),
        generators=(Generator(1, 0.0, 3.0, -3.0, 3.0),),
        loads=(Load(1, 0.0, 0.0), Load(2, 0.3, 0.15), Load(3, 0.4, 0.2), Load(4, 0.3, 0.15)),
    )


@pytest.fixture(scope="session")
def ieee30():
    return ieee30_case()


@pytest.fixture(scope="session")
def table_i():
    return build_scenarios(TABLE_I_SCENARIOS)


@pytest.fixture
def single_scenario():
    return build_scenarios([(1.0, 1.0)])
