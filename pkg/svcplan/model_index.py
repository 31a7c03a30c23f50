from typing import TYPE_CHECKING, Iterator, Optional, Sequence

import numpy as np

from .network import NetworkCase, ScenarioSet
from .program import ConeBlock, ConeKind

if TYPE_CHECKING:
    from .micp import SvcSpec

# Quantity names. Generators and branches are keyed by their ordinal in the
# case, buses by bus id; scenario keys are 0-based ordinals.
PG, QG = "pg", "qg"
PR, QR, PL, QL = "pr", "qr", "pl", "ql"
PL_AUX, QL_AUX = "pl_aux", "ql_aux"
W, S1, S2 = "w", "s1", "s2"
QV, Z = "qv", "z"
DELTA = "delta"

FREE_QUANTITIES = (PG, QG, PR, QR, PL, QL, W, QV, Z)
NONNEG_QUANTITIES = (PL_AUX, QL_AUX, S1, S2)


class MicpIndex:
    """
    Bijection between named model quantities (name, entity, scenario) and
    flat variable positions.

    Per scenario the layout is one free block
    [pg, qg, pr, qr, pl, ql, w, qv, z] followed by one nonnegative block
    [pl_aux, ql_aux, s1, s2]; the scenario-independent delta block comes last.
    ql_aux exists only for zero-resistance branches; qv and z only for
    candidate buses.

    `svc` is the susceptance range and budget the program was built with.
    """

    def __init__(
        self,
        case: NetworkCase,
        scenarios: ScenarioSet,
        candidates: Sequence[int],
        svc: Optional["SvcSpec"] = None,
    ):
        self.case = case
        self.scenarios = scenarios
        self.svc = svc
        self.candidates = tuple(sorted(candidates))
        self.zero_r_branches = tuple(k for k, br in enumerate(case.branches) if br.r == 0.0)
        self._positions: dict[tuple[str, int, Optional[int]], int] = {}
        self._keys: list[tuple[str, int, Optional[int]]] = []
        self._blocks: list[ConeBlock] = []
        self._groups: dict[tuple[str, Optional[int]], list[int]] = {}

        entities = {
            PG: range(len(case.generators)),
            QG: range(len(case.generators)),
            PR: range(len(case.branches)),
            QR: range(len(case.branches)),
            PL: range(len(case.branches)),
            QL: range(len(case.branches)),
            W: case.bus_ids,
            QV: self.candidates,
            Z: self.candidates,
            PL_AUX: range(len(case.branches)),
            QL_AUX: self.zero_r_branches,
            S1: case.bus_ids,
            S2: case.bus_ids,
        }
        for s in range(len(scenarios)):
            for kind, names in ((ConeKind.FREE, FREE_QUANTITIES), (ConeKind.NONNEG, NONNEG_QUANTITIES)):
                start = len(self._keys)
                for name in names:
                    for entity in entities[name]:
                        self._add((name, entity, s))
                if len(self._keys) > start:
                    self._blocks.append(ConeBlock(kind, start, len(self._keys) - start))
        start = len(self._keys)
        for bus in self.candidates:
            self._add((DELTA, bus, None))
        if len(self._keys) > start:
            self._blocks.append(ConeBlock(ConeKind.FREE, start, len(self._keys) - start))

    def _add(self, key):
        self._positions[key] = len(self._keys)
        self._groups.setdefault((key[0], key[2]), []).append(len(self._keys))
        self._keys.append(key)

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, key) -> bool:
        return key in self._positions

    def __repr__(self) -> str:
        return (
            f"MicpIndex(variables={len(self)}, scenarios={len(self.scenarios)}, "
            f"candidates={len(self.candidates)})"
        )

    @property
    def n_variables(self) -> int:
        return len(self._keys)

    @property
    def blocks(self) -> list[ConeBlock]:
        return list(self._blocks)

    @property
    def n_scenarios(self) -> int:
        return len(self.scenarios)

    def position(self, name: str, entity: int, scenario: Optional[int] = None) -> int:
        return self._positions[(name, entity, None if name == DELTA else scenario)]

    def key(self, position: int) -> tuple[str, int, Optional[int]]:
        return self._keys[position]

    def keys(self) -> Iterator[tuple[str, int, Optional[int]]]:
        return iter(self._keys)

    def positions(self, name: str, scenario: Optional[int] = None) -> np.ndarray:
        """Positions of a quantity in entity order: case order, except sorted ids for candidates."""
        if name == DELTA:
            scenario = None
        return np.array(self._groups.get((name, scenario), []), dtype=int)

    def delta_positions(self) -> np.ndarray:
        return self.positions(DELTA)

    def names(self) -> list[str]:
        return [f"{n}[{e}]" if s is None else f"{n}[{e},s{s + 1}]" for n, e, s in self._keys]


def allocate_index(
    case: NetworkCase, scenarios: ScenarioSet, candidates: Sequence[int], svc: Optional["SvcSpec"] = None
) -> MicpIndex:
    """
    Allocate one position per model quantity.

    Per scenario: 2G + 5K + 3B + 2C positions plus one reactive-loss auxiliary
    per zero-resistance branch; C delta positions overall.
    """
    unknown = set(candidates) - set(case.bus_ids)
    if unknown:
        raise ValueError(f"candidate buses not in case: {sorted(unknown)}")
    return MicpIndex(case, scenarios, candidates, svc)
