import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import networkx as nx
import numpy as np

from .exceptions import CaseValidationError, ScenarioError
from .settings import SCENARIO_SUM_TOL


@dataclass(frozen=True)
class Bus:
    id: int
    v_min: float
    v_max: float
    shunt_b: float = 0.0
    is_candidate: bool = True

    def __post_init__(self):
        if not 0 < self.v_min < self.v_max:
            raise CaseValidationError(
                f"bus {self.id}: voltage limits must satisfy 0 < v_min < v_max, "
                f"got ({self.v_min}, {self.v_max})"
            )


@dataclass(frozen=True)
class Branch:
    """
    Pi-model branch. The off-nominal tap and phase shift sit at the sending
    (from) terminal; b_ch is the total charging susceptance.
    """

    from_bus: int
    to_bus: int
    r: float
    x: float
    b_ch: float = 0.0
    tau: float = 1.0
    theta_ps: float = 0.0
    s_max: float = math.inf

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise CaseValidationError(f"branch {self.from_bus}-{self.to_bus} is a self loop")
        if not self.x > 0:
            raise CaseValidationError(f"branch {self.from_bus}-{self.to_bus}: x must be > 0, got {self.x}")
        if self.r < 0:
            raise CaseValidationError(f"branch {self.from_bus}-{self.to_bus}: r must be >= 0, got {self.r}")
        if not self.tau > 0:
            raise CaseValidationError(f"branch {self.from_bus}-{self.to_bus}: tau must be > 0, got {self.tau}")
        if not self.s_max > 0:
            raise CaseValidationError(
                f"branch {self.from_bus}-{self.to_bus}: s_max must be > 0 (use inf for unlimited)"
            )

    @property
    def is_transformer(self) -> bool:
        return self.tau != 1.0 or self.theta_ps != 0.0

    @property
    def is_limited(self) -> bool:
        return math.isfinite(self.s_max)


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float

    def __post_init__(self):
        if self.p_min > self.p_max:
            raise CaseValidationError(f"generator at bus {self.bus}: p_min > p_max")
        if self.q_min > self.q_max:
            raise CaseValidationError(f"generator at bus {self.bus}: q_min > q_max")


@dataclass(frozen=True)
class Load:
    bus: int
    p_base: float
    q_base: float

    def __post_init__(self):
        if not (math.isfinite(self.p_base) and math.isfinite(self.q_base)):
            raise CaseValidationError(f"load at bus {self.bus} is not finite")


@dataclass(frozen=True)
class NetworkCase:
    """
    A planning instance in per-unit on `base_mva`. Construction validates the
    cross-references and the connectivity of the bus/branch graph.
    """

    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]
    _positions: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("buses", "branches", "generators", "loads"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if not self.base_mva > 0:
            raise CaseValidationError(f"base_mva must be > 0, got {self.base_mva}")
        if not self.buses:
            raise CaseValidationError("case has no buses")
        positions = {}
        for pos, bus in enumerate(self.buses):
            if bus.id in positions:
                raise CaseValidationError(f"duplicate bus id {bus.id}")
            positions[bus.id] = pos
        object.__setattr__(self, "_positions", positions)

        for k, br in enumerate(self.branches):
            for end in (br.from_bus, br.to_bus):
                if end not in positions:
                    raise CaseValidationError(f"branch {k} references nonexistent bus {end}")
        for gen in self.generators:
            if gen.bus not in positions:
                raise CaseValidationError(f"generator references nonexistent bus {gen.bus}")
        for load in self.loads:
            if load.bus not in positions:
                raise CaseValidationError(f"load references nonexistent bus {load.bus}")

        graph = self.graph()
        if not nx.is_connected(graph):
            islands = nx.number_connected_components(graph)
            raise CaseValidationError(f"network graph is disconnected ({islands} islands)")

    def __repr__(self) -> str:
        return (
            f"NetworkCase(buses={len(self.buses)}, branches={len(self.branches)}, "
            f"generators={len(self.generators)}, loads={len(self.loads)}, base_mva={self.base_mva})"
        )

    def __str__(self) -> str:
        return self.__repr__()

    def graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(bus.id for bus in self.buses)
        graph.add_edges_from((br.from_bus, br.to_bus) for br in self.branches)
        return graph

    def bus_position(self, bus_id: int) -> int:
        return self._positions[bus_id]

    @property
    def bus_ids(self) -> list[int]:
        return [bus.id for bus in self.buses]

    @property
    def generator_buses(self) -> set[int]:
        return {gen.bus for gen in self.generators}

    def bus(self, bus_id: int) -> Bus:
        return self.buses[self._positions[bus_id]]

    def total_load(self) -> tuple[float, float]:
        """Total base demand in MW / MVar."""
        p = sum(load.p_base for load in self.loads) * self.base_mva
        q = sum(load.q_base for load in self.loads) * self.base_mva
        return p, q


@dataclass(frozen=True)
class Scenario:
    rho: float
    load_factor: float

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ScenarioError(f"scenario probability must lie in [0, 1], got {self.rho}")
        if not self.load_factor > 0:
            raise ScenarioError(f"load factor must be > 0, got {self.load_factor}")


@dataclass(frozen=True)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        if not self.scenarios:
            raise ScenarioError("scenario set is empty")
        total = math.fsum(s.rho for s in self.scenarios)
        if abs(total - 1.0) > 1e-9:
            raise ScenarioError(f"scenario probabilities sum to {total}, expected 1")

    def __len__(self) -> int:
        return len(self.scenarios)

    def __iter__(self) -> Iterator[Scenario]:
        return iter(self.scenarios)

    def __getitem__(self, i: int) -> Scenario:
        return self.scenarios[i]

    def to_rows(self) -> list[tuple[float, float]]:
        return [(s.rho, s.load_factor) for s in self.scenarios]


def build_scenarios(table: Iterable[Sequence[float]]) -> ScenarioSet:
    """
    Build a scenario set from (rho, lambda) rows.

    Args:
        - table: iterable of (probability, load factor) pairs

    Probabilities within 1e-6 of summing to one are renormalized; anything
    further off is rejected.
    """
    rows = [(float(rho), float(lam)) for rho, lam in table]
    if not rows:
        raise ScenarioError("scenario table is empty")
    for rho, lam in rows:
        if rho < 0:
            raise ScenarioError(f"scenario probability must be >= 0, got {rho}")
        if not lam > 0:
            raise ScenarioError(f"load factor must be > 0, got {lam}")
    total = math.fsum(rho for rho, _ in rows)
    if abs(total - 1.0) > SCENARIO_SUM_TOL:
        raise ScenarioError(f"scenario probabilities sum to {total:.6g}, expected 1")
    return ScenarioSet(tuple(Scenario(rho / total, lam) for rho, lam in rows))


def scale_loads(case: NetworkCase, scenario: Scenario) -> tuple[Load, ...]:
    """Scenario demand: every base load multiplied by the load factor."""
    lam = scenario.load_factor
    return tuple(replace(load, p_base=lam * load.p_base, q_base=lam * load.q_base) for load in case.loads)


def rescale_base_load(case: NetworkCase, p_mw: float, q_mvar: float) -> NetworkCase:
    """
    Copy of `case` with real and reactive base demand scaled separately so the
    totals become `p_mw` / `q_mvar`. The load distribution over buses is kept.
    """
    p_total, q_total = case.total_load()
    if p_total <= 0 or q_total <= 0:
        raise CaseValidationError("cannot rescale a case without positive real and reactive demand")
    fp, fq = p_mw / p_total, q_mvar / q_total
    loads = tuple(replace(load, p_base=fp * load.p_base, q_base=fq * load.q_base) for load in case.loads)
    return replace(case, loads=loads)


def candidate_buses(case: NetworkCase) -> list[int]:
    """Buses eligible for an SVC: flagged candidates that host no generator."""
    gen_buses = case.generator_buses
    return sorted(bus.id for bus in case.buses if bus.is_candidate and bus.id not in gen_buses)


def bus_susceptance(case: NetworkCase) -> np.ndarray:
    """
    Fixed susceptance B_i per bus position: the bus shunt plus half the charging
    of every incident branch, scaled by 1/tau^2 on the tapped (sending) side.
    """
    b = np.array([bus.shunt_b for bus in case.buses], dtype=float)
    for br in case.branches:
        half = br.b_ch / 2.0
        b[case.bus_position(br.from_bus)] += half / br.tau**2
        b[case.bus_position(br.to_bus)] += half
    return b


def bus_demand(case: NetworkCase, loads: Sequence[Load]) -> tuple[np.ndarray, np.ndarray]:
    """Aggregate a load collection into per-bus-position (P, Q) arrays."""
    p = np.zeros(len(case.buses))
    q = np.zeros(len(case.buses))
    for load in loads:
        pos = case.bus_position(load.bus)
        p[pos] += load.p_base
        q[pos] += load.q_base
    return p, q
