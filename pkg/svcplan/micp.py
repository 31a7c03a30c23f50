import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .exceptions import AssemblyError
from .lfb import assemble_lfb, build_cycle_basis, reactive_balance_rows
from .model_index import DELTA, PG, PL, PL_AUX, QG, QL_AUX, QV, S1, S2, W, Z, MicpIndex, allocate_index
from .network import NetworkCase, Scenario, ScenarioSet, candidate_buses
from .program import ConicProgram, LinearRow, ProgramBuilder, VariableBound
from .settings import DEFAULT_ALPHA, DEFAULT_EPS_THETA, DEFAULT_HALF_CHARGING, DEFAULT_SVC_RANGE, WEIGHT_PRESETS

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightScheme:
    a1: float
    a2: float
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError(f"objective weights must be >= 0, got a1={self.a1}, a2={self.a2}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")

    @classmethod
    def preset(cls, name: str, alpha: float = DEFAULT_ALPHA) -> "WeightScheme":
        if name not in WEIGHT_PRESETS:
            raise ValueError(f"unknown weight preset {name!r}, expected one of {', '.join(WEIGHT_PRESETS)}")
        a1, a2 = WEIGHT_PRESETS[name]
        return cls(a1, a2, alpha)

    @classmethod
    def from_string(cls, text: str, alpha: float = DEFAULT_ALPHA) -> "WeightScheme":
        """Accepts a preset name (`case1`..`case4`) or an explicit `a1,a2` pair."""
        text = text.strip()
        if text in WEIGHT_PRESETS:
            return cls.preset(text, alpha)
        parts = text.split(",")
        if len(parts) != 2:
            raise ValueError(f"weights must be a preset name or 'a1,a2', got {text!r}")
        return cls(float(parts[0]), float(parts[1]), alpha)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "WeightScheme":
        return cls(**data)


@dataclass(frozen=True)
class SvcSpec:
    b_min: float = DEFAULT_SVC_RANGE[0]
    b_max: float = DEFAULT_SVC_RANGE[1]
    n_v: int = 0

    def __post_init__(self):
        if self.b_min > self.b_max:
            raise ValueError(f"SVC range is empty: b_min={self.b_min} > b_max={self.b_max}")
        if self.n_v < 0:
            raise ValueError(f"SVC budget must be >= 0, got {self.n_v}")

    def to_dict(self) -> dict:
        return asdict(self)


def assemble_objective(index: MicpIndex, scenarios: ScenarioSet, weights: WeightScheme) -> np.ndarray:
    """
    Probability-weighted objective over the named variables:

        sum_s rho_s (A1 sum_k Pl_ks + A2 sum_i (s1_is + s2_is) + alpha sum_k aux_ks)

    where aux covers Pl_aux on every branch and Ql_aux on zero-resistance branches.
    """
    c = np.zeros(index.n_variables)
    for s, scenario in enumerate(scenarios):
        rho = scenario.rho
        c[index.positions(PL, s)] += rho * weights.a1
        c[index.positions(S1, s)] += rho * weights.a2
        c[index.positions(S2, s)] += rho * weights.a2
        c[index.positions(PL_AUX, s)] += rho * weights.alpha
        c[index.positions(QL_AUX, s)] += rho * weights.alpha
    return c


def emit_abs_linearization(index: MicpIndex, scenario: Optional[int] = None) -> list[LinearRow]:
    """W - 1 + s1 - s2 = 0 per bus; s1, s2 live in the nonnegative block."""
    scenarios = range(index.n_scenarios) if scenario is None else (scenario,)
    rows = []
    for s in scenarios:
        for bus in index.case.bus_ids:
            rows.append(
                LinearRow.equal(
                    "abs_deviation",
                    {index.position(W, bus, s): 1.0, index.position(S1, bus, s): 1.0, index.position(S2, bus, s): -1.0},
                    1.0,
                    f"bus {bus}",
                )
            )
    return rows


def emit_svc_balance(index: MicpIndex, case: NetworkCase, scenario: Scenario, s: int = 0) -> list[LinearRow]:
    """Reactive balance with the SVC injection Qv added at candidate buses."""
    return reactive_balance_rows(case, scenario, s, index, with_svc=True)


def emit_trilinear_linearization(index: MicpIndex, svc: SvcSpec, scenario: Optional[int] = None) -> list[LinearRow]:
    """
    Exact linearization of Qv = delta b W through z = delta W:

        z b_min <= Qv <= z b_max
        delta vmin^2 <= z <= delta vmax^2
        W - (1 - delta) vmax^2 <= z <= W - (1 - delta) vmin^2
    """
    scenarios = range(index.n_scenarios) if scenario is None else (scenario,)
    rows = []
    for s in scenarios:
        for bus in index.candidates:
            label = f"bus {bus}"
            vmin2, vmax2 = index.case.bus(bus).v_min ** 2, index.case.bus(bus).v_max ** 2
            qv, z, w = index.position(QV, bus, s), index.position(Z, bus, s), index.position(W, bus, s)
            delta = index.position(DELTA, bus)
            rows += [
                LinearRow.between("svc_range", {qv: 1.0, z: -svc.b_min}, 0.0, math.inf, label),
                LinearRow.between("svc_range", {qv: 1.0, z: -svc.b_max}, -math.inf, 0.0, label),
                LinearRow.between("z_on_off", {z: 1.0, delta: -vmin2}, 0.0, math.inf, label),
                LinearRow.between("z_on_off", {z: 1.0, delta: -vmax2}, -math.inf, 0.0, label),
                LinearRow.between("z_tracks_w", {z: 1.0, w: -1.0, delta: -vmax2}, -vmax2, math.inf, label),
                LinearRow.between("z_tracks_w", {z: 1.0, w: -1.0, delta: -vmin2}, -math.inf, -vmin2, label),
            ]
    return rows


def emit_budget_and_bounds(
    index: MicpIndex, svc: SvcSpec, case: NetworkCase
) -> tuple[list[LinearRow], list[VariableBound]]:
    """Budget row sum(delta) <= N_v plus generator, voltage and delta bounds."""
    deltas = index.delta_positions()
    rows = [LinearRow.between("svc_budget", {int(p): 1.0 for p in deltas}, -math.inf, float(svc.n_v), "budget")]
    bounds = []
    for s in range(index.n_scenarios):
        for g, gen in enumerate(case.generators):
            bounds.append(VariableBound(index.position(PG, g, s), gen.p_min, gen.p_max))
            bounds.append(VariableBound(index.position(QG, g, s), gen.q_min, gen.q_max))
        for bus in case.buses:
            bounds.append(VariableBound(index.position(W, bus.id, s), bus.v_min**2, bus.v_max**2))
    for p in deltas:
        bounds.append(VariableBound(int(p), 0.0, 1.0, integer=True))
    return rows, bounds


def build_micp(
    case: NetworkCase,
    scenarios: ScenarioSet,
    weights: WeightScheme,
    svc: SvcSpec,
    candidates: Optional[Sequence[int]] = None,
    eps_theta: float = DEFAULT_EPS_THETA,
    half_charging: bool = DEFAULT_HALF_CHARGING,
    workers: int = 1,
) -> tuple[ConicProgram, MicpIndex]:
    """
    Assemble the complete mixed-integer conic program.

    Args:
        - case (NetworkCase): the network
        - scenarios (ScenarioSet): load scenarios
        - weights (WeightScheme): objective weights and cone penalty scale
        - svc (SvcSpec): susceptance range and budget
        - candidates (list[int]): candidate buses, defaults to every non-generator bus
        - eps_theta (float): loop angle tolerance in radians
        - half_charging (bool): charging interpretation of the thermal cones
        - workers (int): threads used to emit the per-scenario blocks

    Returns the program and the variable index; the index carries `svc`.
    Row order is fixed, so equal inputs give identical programs.

    Example usage:
    ```
    from svcplan import SvcSpec, WeightScheme, build_micp, build_scenarios, ieee30_case
    from svcplan.settings import TABLE_I_SCENARIOS

    program, index = build_micp(
        ieee30_case(), build_scenarios(TABLE_I_SCENARIOS), WeightScheme.preset("case1"), SvcSpec(n_v=1)
    )
    ```
    """
    candidates = candidate_buses(case) if candidates is None else list(candidates)
    index = allocate_index(case, scenarios, candidates, svc)
    basis = build_cycle_basis(case)

    def emit(s: int):
        scenario = scenarios[s]
        block = assemble_lfb(case, scenario, index, s, eps_theta, half_charging, basis)
        rows = block.real_balance + emit_svc_balance(index, case, scenario, s)
        rows += block.voltage_drop + block.loop_angle + block.loss_coupling
        rows += emit_abs_linearization(index, s) + emit_trilinear_linearization(index, svc, s)
        return rows, block.cone_rows()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(emit, range(len(scenarios))))
    else:
        blocks = [emit(s) for s in range(len(scenarios))]

    builder = ProgramBuilder(index.n_variables, index.blocks)
    builder.set_objective(assemble_objective(index, scenarios, weights))
    budget_rows, bounds = emit_budget_and_bounds(index, svc, case)
    for bound in bounds:
        builder.add_bound(bound)
    for rows, _ in blocks:
        for row in rows:
            builder.add_row(row)
    for row in budget_rows:
        builder.add_row(row)
    for _, cones in blocks:
        for cone in cones:
            builder.add_cone(cone)
    try:
        program = builder.build()
    except AssemblyError as exc:
        raise AssemblyError(f"building the SVC program failed: {exc.message}")
    logger.info(
        "built program: %d variables, %d equalities, %d cone blocks, %d binaries",
        program.n,
        program.m,
        len(program.blocks),
        len(program.integer_positions),
    )
    return program, index
