import csv
import heapq
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, TextIO

import numpy as np

from .conic import LOG_FIELDS, ConicSolution, SolverSettings, SolveStatus, solve_with_fixings
from .exceptions import ContractViolation, NumericalFailure, PreconditionError
from .micp import SvcSpec
from .model_index import (
    PG,
    PL,
    PL_AUX,
    PR,
    QG,
    QL,
    QL_AUX,
    QR,
    QV,
    S1,
    S2,
    W,
    MicpIndex,
)
from .program import ConicProgram
from .settings import (
    DEFAULT_ABS_GAP,
    DEFAULT_INTEGRALITY_TOL,
    DEFAULT_MAX_NODES,
    DEFAULT_REL_GAP,
    DEFAULT_RELAXED_ACCEPT_TOL,
    DEFAULT_TIME_LIMIT,
)
from .utils import finite_or_none

logger = logging.getLogger(__name__)

NODE_LOG_FIELDS = ("node", "depth", "bound", "fractional", "action")
SOLVER_LOG_FIELDS = ("node",) + LOG_FIELDS


@dataclass(frozen=True)
class BnbSettings:
    """Best-bound node order, most-fractional branching with lowest-bus-id tie-break."""

    abs_gap: float = DEFAULT_ABS_GAP
    rel_gap: float = DEFAULT_REL_GAP
    max_nodes: int = DEFAULT_MAX_NODES
    integrality_tol: float = DEFAULT_INTEGRALITY_TOL
    workers: int = 1
    relaxed_accept_tol: float = DEFAULT_RELAXED_ACCEPT_TOL
    # seconds; the root node is always solved
    time_limit: Optional[float] = DEFAULT_TIME_LIMIT

    def __post_init__(self):
        if not (self.abs_gap > 0 and self.rel_gap > 0):
            raise ValueError("branch-and-bound gaps must be > 0")
        if not 0 <= self.integrality_tol < 0.5:
            raise ValueError(f"integrality_tol must lie in [0, 0.5), got {self.integrality_tol}")
        if self.max_nodes < 1 or self.workers < 1:
            raise ValueError("max_nodes and workers must be >= 1")
        if self.time_limit is not None and not self.time_limit > 0:
            raise ValueError(f"time_limit must be > 0, got {self.time_limit}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BnbSettings":
        return cls(**data)


@dataclass(order=True)
class Node:
    bound: float
    id: int
    depth: int = field(compare=False, default=0)
    fixings: dict = field(compare=False, default_factory=dict)


@dataclass
class ScenarioOutcome:
    """Operating point of one scenario. Arrays follow case order (bus, generator, branch)."""

    scenario: int
    rho: float
    load_factor: float
    loss_pu: float
    loss_mw: float
    deviation_sq: float
    deviation_abs: float
    max_cone_mismatch: float
    max_cone_violation: float
    susceptance: dict
    voltage: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    pg: np.ndarray = field(repr=False)
    qg: np.ndarray = field(repr=False)
    pr: np.ndarray = field(repr=False)
    qr: np.ndarray = field(repr=False)
    pl: np.ndarray = field(repr=False)
    ql: np.ndarray = field(repr=False)
    cone_aux: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "rho": self.rho,
            "load_factor": self.load_factor,
            "loss_pu": self.loss_pu,
            "loss_mw": self.loss_mw,
            "deviation_sq": self.deviation_sq,
            "deviation_abs": self.deviation_abs,
            "max_cone_mismatch": self.max_cone_mismatch,
            "max_cone_violation": self.max_cone_violation,
            "susceptance": {str(bus): b for bus, b in sorted(self.susceptance.items())},
            "voltage": self.voltage.tolist(),
            "pg": self.pg.tolist(),
            "qg": self.qg.tolist(),
        }


@dataclass
class AllocationResult:
    status: str
    chosen_buses: tuple
    objective: float
    breakdown: dict
    scenarios: list
    gap: float
    lower_bound: float
    nodes: int
    wall_time: float
    max_cone_mismatch: float
    base_mva: float = 100.0
    bus_ids: tuple = ()
    max_cone_violation: float = 0.0

    @property
    def loss_mw(self) -> float:
        """Probability-weighted loss in MW."""
        return math.fsum(o.rho * o.loss_mw for o in self.scenarios)

    @property
    def loss_pu(self) -> float:
        return math.fsum(o.rho * o.loss_pu for o in self.scenarios)

    @property
    def qloss_pu(self) -> float:
        """Probability-weighted reactive loss in p.u."""
        return math.fsum(o.rho * float(np.sum(o.ql)) for o in self.scenarios)

    @property
    def qloss_mvar(self) -> float:
        return self.qloss_pu * self.base_mva

    @property
    def deviation_sq(self) -> float:
        return math.fsum(o.rho * o.deviation_sq for o in self.scenarios)

    @property
    def deviation_abs(self) -> float:
        return math.fsum(o.rho * o.deviation_abs for o in self.scenarios)

    def __repr__(self) -> str:
        return (
            f"AllocationResult(status={self.status}, chosen={list(self.chosen_buses)}, "
            f"objective={self.objective:.8g}, loss_mw={self.loss_mw:.4f}, nodes={self.nodes}, gap={self.gap:.2e})"
        )

    def to_dict(self, include_time: bool = False) -> dict:
        data = {
            "status": self.status,
            "chosen_buses": list(self.chosen_buses),
            "objective": finite_or_none(self.objective),
            "breakdown": self.breakdown,
            "loss_mw": self.loss_mw,
            "loss_pu": self.loss_pu,
            "qloss_mvar": self.qloss_mvar,
            "qloss_pu": self.qloss_pu,
            "deviation_sq": self.deviation_sq,
            "deviation_abs": self.deviation_abs,
            "gap": finite_or_none(self.gap),
            "lower_bound": finite_or_none(self.lower_bound),
            "nodes": self.nodes,
            "max_cone_mismatch": self.max_cone_mismatch,
            "max_cone_violation": self.max_cone_violation,
            "bus_ids": list(self.bus_ids),
            "scenarios": [o.to_dict() for o in self.scenarios],
        }
        if include_time:
            data["wall_time"] = self.wall_time
        return data


def cone_slack(aux: np.ndarray, w_to: np.ndarray, pr: np.ndarray, qr: np.ndarray) -> np.ndarray:
    """Signed slack 2 aux W_to - (Pr^2 + Qr^2) of the loss cones; negative entries violate them."""
    return 2 * aux * w_to - (pr**2 + qr**2)


def _cone_aux_positions(index: MicpIndex, s: int) -> np.ndarray:
    aux = index.positions(PL_AUX, s).copy()
    zero_r = index.positions(QL_AUX, s)
    for pos_in_group, k in enumerate(index.zero_r_branches):
        aux[k] = zero_r[pos_in_group]
    return aux


def summarize(
    program: ConicProgram,
    index: MicpIndex,
    x: np.ndarray,
    svc: Optional[SvcSpec] = None,
    status: str = "optimal",
    gap: float = 0.0,
    lower_bound: Optional[float] = None,
    nodes: int = 0,
    wall_time: float = 0.0,
) -> AllocationResult:
    """
    Read an allocation and its per-scenario operating points out of a primal vector.

    Objective terms are taken from the program's own coefficients, so the
    breakdown matches whatever weights the program was built with. `svc`
    defaults to the one carried by `index`.
    """
    svc = _resolve_svc(index, svc)
    case = index.case
    deltas = index.delta_positions()
    chosen = tuple(bus for bus, p in zip(index.candidates, deltas) if x[p] > 0.5)

    def term(names) -> float:
        total = 0.0
        for s in range(index.n_scenarios):
            for name in names:
                pos = index.positions(name, s)
                total += float(program.c[pos] @ x[pos])
        return total

    breakdown = {
        "loss": term((PL,)),
        "deviation": term((S1, S2)),
        "penalty": term((PL_AUX, QL_AUX)),
    }
    breakdown["loss_term_mw"] = breakdown["loss"] * case.base_mva

    outcomes = []
    worst_mismatch = worst_violation = 0.0
    for s, scenario in enumerate(index.scenarios):
        w = x[index.positions(W, s)]
        pr, qr = x[index.positions(PR, s)], x[index.positions(QR, s)]
        aux = x[_cone_aux_positions(index, s)]
        w_to = w[[case.bus_position(br.to_bus) for br in case.branches]]
        slack = cone_slack(aux, w_to, pr, qr)
        mismatch = max(float(np.max(slack)), 0.0) if len(slack) else 0.0
        violation = max(-float(np.min(slack)), 0.0) if len(slack) else 0.0
        worst_mismatch = max(worst_mismatch, mismatch)
        worst_violation = max(worst_violation, violation)
        susceptance = {}
        for bus in chosen:
            qv = x[index.position(QV, bus, s)]
            wb = w[case.bus_position(bus)]
            susceptance[bus] = float(np.clip(qv / wb, svc.b_min, svc.b_max))
        pl = x[index.positions(PL, s)]
        loss = float(np.sum(pl))
        outcomes.append(
            ScenarioOutcome(
                scenario=s + 1,
                rho=scenario.rho,
                load_factor=scenario.load_factor,
                loss_pu=loss,
                loss_mw=loss * case.base_mva,
                deviation_sq=float(np.sum(np.abs(w - 1.0))),
                deviation_abs=float(np.sum(np.abs(np.sqrt(np.maximum(w, 0.0)) - 1.0))),
                max_cone_mismatch=mismatch,
                max_cone_violation=violation,
                susceptance=susceptance,
                voltage=np.sqrt(np.maximum(w, 0.0)),
                w=w.copy(),
                pg=x[index.positions(PG, s)].copy(),
                qg=x[index.positions(QG, s)].copy(),
                pr=pr.copy(),
                qr=qr.copy(),
                pl=pl.copy(),
                ql=x[index.positions(QL, s)].copy(),
                cone_aux=aux.copy(),
            )
        )
    objective = program.objective_value(x)
    return AllocationResult(
        status=status,
        chosen_buses=chosen,
        objective=objective,
        breakdown=breakdown,
        scenarios=outcomes,
        gap=gap,
        lower_bound=objective if lower_bound is None else lower_bound,
        nodes=nodes,
        wall_time=wall_time,
        max_cone_mismatch=worst_mismatch,
        base_mva=case.base_mva,
        bus_ids=tuple(case.bus_ids),
        max_cone_violation=worst_violation,
    )


def _fractionality(relaxation: ConicSolution, index: MicpIndex, fixings: dict) -> list[tuple[float, int, int]]:
    """(fractionality, bus, position) of every free delta, in bus order."""
    out = []
    for bus, pos in zip(index.candidates, index.delta_positions()):
        pos = int(pos)
        if pos in fixings:
            continue
        value = relaxation.x[pos]
        out.append((min(value, 1.0 - value), bus, pos))
    return out


def is_integral(relaxation: ConicSolution, index: MicpIndex, settings: BnbSettings, fixings: dict = None) -> bool:
    return all(f <= settings.integrality_tol for f, _, _ in _fractionality(relaxation, index, fixings or {}))


def branch(node: Node, relaxation: ConicSolution, settings: BnbSettings, index: MicpIndex) -> tuple[Node, Node]:
    """
    Split `node` on the most fractional delta (ties go to the lowest bus id).
    Returns the (delta = 0, delta = 1) children; their ids are left at -1.
    """
    fractional = [f for f in _fractionality(relaxation, index, node.fixings) if f[0] > settings.integrality_tol]
    if not fractional:
        raise ContractViolation(f"node {node.id}: relaxation is integral, nothing to branch on")
    top = max(f for f, _, _ in fractional)
    _, bus, pos = min((t for t in fractional if t[0] >= top - 1e-12), key=lambda t: t[1])
    logger.debug("node %d: branching on bus %d (delta=%.6f)", node.id, bus, relaxation.x[pos])
    bound = relaxation.objective
    return (
        Node(bound, -1, node.depth + 1, {**node.fixings, pos: 0}),
        Node(bound, -1, node.depth + 1, {**node.fixings, pos: 1}),
    )


def _resolve_svc(index: MicpIndex, svc: Optional[SvcSpec]) -> SvcSpec:
    if svc is None:
        if index.svc is None:
            raise PreconditionError("no SVC settings: pass svc or build the program with build_micp")
        return index.svc
    if index.svc is not None and svc != index.svc:
        raise ContractViolation(f"{svc} differs from the SVC settings the program was built with ({index.svc})")
    return svc


def _accept(solution: ConicSolution, settings: BnbSettings, node_id: int) -> Optional[ConicSolution]:
    """Relaxation usable as a bound, None when infeasible; raises when the solve is unusable."""
    if solution.status == SolveStatus.OPTIMAL:
        return solution
    if solution.status == SolveStatus.INFEASIBLE:
        return None
    if solution.status == SolveStatus.UNBOUNDED:
        raise NumericalFailure("relaxation is unbounded", node=node_id)
    if solution.residuals.worst() <= settings.relaxed_accept_tol:
        logger.warning(
            "node %d: relaxation ended with %s, accepting as a bound at residuals %s",
            node_id,
            solution.status.value,
            solution.residuals,
        )
        return solution
    raise NumericalFailure(f"relaxation solve ended with {solution.status.value}: {solution.message}", node=node_id)


def accept_incumbent(solution: ConicSolution, solver_settings: SolverSettings = None) -> Optional[ConicSolution]:
    """
    Gate for solves with every delta fixed (incumbents and the no-SVC baseline).

    Optimal solves pass. A solve stopped early passes only when its primal
    residual is within feas_tol, so its objective is still an upper bound.
    Returns None otherwise.
    """
    solver_settings = solver_settings or SolverSettings()
    if solution.status == SolveStatus.OPTIMAL:
        return solution
    if solution.status in (SolveStatus.ITERATION_LIMIT, SolveStatus.NUMERICAL_FAILURE):
        if solution.residuals.primal <= solver_settings.feas_tol:
            logger.warning("fixed solve ended with %s, primal feasible at %s", solution.status.value, solution.residuals)
            return solution
    return None


def evaluate_allocation(
    program: ConicProgram,
    index: MicpIndex,
    buses: Sequence[int],
    solver_settings: SolverSettings = None,
) -> Optional[ConicSolution]:
    """
    Solve with delta = 1 at `buses` and 0 at every other candidate.
    Returns None when the allocation has no usable solution (for instance
    when it exceeds the budget).
    """
    unknown = set(buses) - set(index.candidates)
    if unknown:
        raise PreconditionError(f"buses {sorted(unknown)} are not SVC candidates")
    on = set(buses)
    fixings = {int(p): int(bus in on) for bus, p in zip(index.candidates, index.delta_positions())}
    return accept_incumbent(solve_with_fixings(program, fixings, solver_settings), solver_settings)


def enumerate_placements(
    program: ConicProgram,
    index: MicpIndex,
    solver_settings: SolverSettings = None,
) -> dict[int, float]:
    """Objective of every single-SVC placement; math.inf where the placement has no usable solution."""
    objectives = {}
    for bus in index.candidates:
        solution = evaluate_allocation(program, index, [bus], solver_settings)
        objectives[bus] = solution.objective if solution is not None else math.inf
    logger.info("enumerated %d single-SVC placements", len(objectives))
    return objectives


def round_heuristic(
    relaxation: ConicSolution,
    index: MicpIndex,
    svc: SvcSpec,
    settings: BnbSettings,
    program: ConicProgram,
    solver_settings: SolverSettings = None,
) -> Optional[ConicSolution]:
    """
    Fix the N_v largest deltas above integrality_tol to 1 and the rest to 0,
    then re-solve. Returns the solution when it passes accept_incumbent.
    """
    ranked = sorted(
        ((relaxation.x[int(p)], bus) for bus, p in zip(index.candidates, index.delta_positions())),
        key=lambda t: (-t[0], t[1]),
    )
    on = [bus for value, bus in ranked[: svc.n_v] if value > settings.integrality_tol]
    return evaluate_allocation(program, index, on, solver_settings)


class _Incumbent:
    def __init__(self):
        self.solution: Optional[ConicSolution] = None
        self.chosen: tuple = ()

    @property
    def value(self) -> float:
        return self.solution.objective if self.solution is not None else math.inf

    def offer(self, solution: ConicSolution, chosen: tuple) -> bool:
        """Keep the better point; equal objectives keep the smaller bus set."""
        if self.solution is None or solution.objective < self.value - 1e-9 or (
            abs(solution.objective - self.value) <= 1e-9 and chosen < self.chosen
        ):
            self.solution, self.chosen = solution, chosen
            return True
        return False


def _chosen(x: np.ndarray, index: MicpIndex) -> tuple:
    return tuple(bus for bus, p in zip(index.candidates, index.delta_positions()) if x[p] > 0.5)


def solve_misocp(
    program: ConicProgram,
    index: MicpIndex,
    settings: BnbSettings = None,
    svc: SvcSpec = None,
    solver_settings: SolverSettings = None,
    node_log: Optional[TextIO] = None,
    solver_log: Optional[TextIO] = None,
    start: Optional[Sequence[int]] = None,
) -> AllocationResult:
    """
    Branch-and-bound over the delta variables.

    Args:
        - program (ConicProgram): program from build_micp
        - index (MicpIndex): its variable index
        - settings (BnbSettings): gaps, limits and worker count
        - svc (SvcSpec): defaults to the settings carried by `index`; must match them when given
        - solver_settings (SolverSettings): relaxation solver settings
        - node_log (TextIO): optional stream receiving one CSV row per node
        - solver_log (TextIO): optional stream receiving the solver iterations of every node, keyed by node id
        - start (list[int]): SVC buses of a known allocation, used as the first incumbent

    Relaxations with integral deltas are re-solved with every delta fixed, so
    incumbents are exactly integral. When max_nodes or time_limit is hit the
    incumbent is returned with status "node_limit" or "time_limit". The
    reported gap is measured against the smallest bound of every node that
    was pruned or left open, so it is never below what the search proved.

    Example usage:
    ```
    from svcplan import SvcSpec, WeightScheme, build_micp, build_scenarios, ieee30_case, solve_misocp

    program, index = build_micp(
        ieee30_case(), build_scenarios([(1.0, 1.0)]), WeightScheme.preset("case1"), SvcSpec(n_v=1)
    )
    result = solve_misocp(program, index)
    ```
    """
    settings = settings or BnbSettings()
    svc = _resolve_svc(index, svc)
    if len(program.integer_positions) == 0:
        raise ContractViolation("program has no integer variables")
    started = time.perf_counter()
    writer = None
    if node_log is not None:
        writer = csv.writer(node_log)
        writer.writerow(NODE_LOG_FIELDS)
    solver_writer = None
    if solver_log is not None:
        solver_writer = csv.writer(solver_log)
        solver_writer.writerow(SOLVER_LOG_FIELDS)

    def log_node(node: Node, bound: float, fractional: int, action: str):
        if writer is not None:
            writer.writerow([node.id, node.depth, f"{bound:.10e}", fractional, action])
        logger.debug("node %d depth %d bound %.8g: %s", node.id, node.depth, bound, action)

    def relax(fixings: dict) -> tuple[ConicSolution, str]:
        buffer = io.StringIO() if solver_writer is not None else None
        solution = solve_with_fixings(program, fixings, solver_settings, buffer)
        return solution, buffer.getvalue() if buffer is not None else ""

    def record(node_id: int, text: str):
        if solver_writer is None or not text:
            return
        for row in list(csv.reader(io.StringIO(text)))[1:]:
            solver_writer.writerow([node_id, *row])

    def all_fixed(x: np.ndarray) -> dict:
        return {int(p): int(round(x[p])) for p in index.delta_positions()}

    def out_of_time() -> bool:
        return settings.time_limit is not None and time.perf_counter() - started >= settings.time_limit

    incumbent = _Incumbent()
    if start is not None:
        if len(set(start)) > svc.n_v:
            raise PreconditionError(f"start allocation {sorted(set(start))} exceeds the budget of {svc.n_v}")
        seeded = evaluate_allocation(program, index, sorted(set(start)), solver_settings)
        if seeded is not None:
            incumbent.offer(seeded, _chosen(seeded.x, index))
            logger.info("start incumbent %.10g at buses %s", seeded.objective, list(incumbent.chosen))

    heap: list[Node] = [Node(-math.inf, 0, 0, {})]
    next_id = 1
    solved = 0
    root_infeasible = False
    # smallest bound among nodes closed by the gap test
    pruned_floor = math.inf
    pool = ThreadPoolExecutor(max_workers=settings.workers) if settings.workers > 1 else None

    def cutoff() -> float:
        value = incumbent.value
        return value - max(settings.abs_gap, settings.rel_gap * abs(value)) if math.isfinite(value) else math.inf

    try:
        while heap and solved < settings.max_nodes and not (solved and out_of_time()):
            batch = []
            while heap and len(batch) < settings.workers and solved + len(batch) < settings.max_nodes:
                node = heapq.heappop(heap)
                if node.bound >= cutoff():
                    pruned_floor = min(pruned_floor, node.bound)
                    log_node(node, node.bound, 0, "pruned")
                    continue
                batch.append(node)
            if not batch:
                continue
            if pool is not None and len(batch) > 1:
                results = list(pool.map(lambda n: relax(n.fixings), batch))
            else:
                results = [relax(node.fixings) for node in batch]
            solved += len(batch)

            for node, (solution, text) in zip(batch, results):
                record(node.id, text)
                relaxation = _accept(solution, settings, node.id)
                if relaxation is None:
                    if node.id == 0:
                        root_infeasible = True
                    log_node(node, node.bound, 0, "infeasible")
                    continue
                bound = relaxation.objective
                if bound < node.bound - 1e-7 * max(1.0, abs(node.bound)):
                    logger.warning("node %d: bound %.10g below parent bound %.10g", node.id, bound, node.bound)
                fractional = [f for f in _fractionality(relaxation, index, node.fixings) if f[0] > settings.integrality_tol]
                if bound >= cutoff():
                    pruned_floor = min(pruned_floor, bound)
                    log_node(node, bound, len(fractional), "pruned")
                    continue
                if not fractional:
                    fixings = all_fixed(relaxation.x)
                    if fixings == node.fixings:
                        exact = accept_incumbent(relaxation, solver_settings)
                    else:
                        exact_solution, text = relax(fixings)
                        record(node.id, text)
                        exact = accept_incumbent(exact_solution, solver_settings)
                    if exact is None:
                        # the subtree is closed but its best point is unproven
                        pruned_floor = min(pruned_floor, bound)
                        log_node(node, bound, 0, "rejected")
                    elif incumbent.offer(exact, _chosen(exact.x, index)):
                        log_node(node, bound, 0, "incumbent")
                    else:
                        pruned_floor = min(pruned_floor, bound)
                        log_node(node, bound, 0, "pruned")
                    continue
                if node.id == 0:
                    rounded = round_heuristic(relaxation, index, svc, settings, program, solver_settings)
                    if rounded is not None and incumbent.offer(rounded, _chosen(rounded.x, index)):
                        logger.info("rounding heuristic incumbent %.10g", rounded.objective)
                for child in branch(node, relaxation, settings, index):
                    child.id = next_id
                    next_id += 1
                    heapq.heappush(heap, child)
                log_node(node, bound, len(fractional), "branched")
    finally:
        if pool is not None:
            pool.shutdown()

    wall_time = time.perf_counter() - started
    limit = "time_limit" if heap and solved < settings.max_nodes else "node_limit"
    if incumbent.solution is None:
        status = "infeasible" if root_infeasible or not heap else limit
        logger.info("branch-and-bound found no incumbent (%s) after %d nodes", status, solved)
        return AllocationResult(
            status=status,
            chosen_buses=(),
            objective=math.inf,
            breakdown={},
            scenarios=[],
            gap=math.inf,
            lower_bound=min((n.bound for n in heap), default=math.inf),
            nodes=solved,
            wall_time=wall_time,
            max_cone_mismatch=0.0,
            base_mva=index.case.base_mva,
            bus_ids=tuple(index.case.bus_ids),
        )

    value = incumbent.value
    status = limit if any(n.bound < cutoff() for n in heap) else "optimal"
    lower_bound = min([value, pruned_floor] + [n.bound for n in heap])
    gap = value - lower_bound
    logger.info(
        "branch-and-bound %s: objective %.10g, buses %s, %d nodes, gap %.2e",
        status,
        value,
        list(incumbent.chosen),
        solved,
        gap,
    )
    return summarize(
        program,
        index,
        incumbent.solution.x,
        svc,
        status=status,
        gap=gap,
        lower_bound=lower_bound,
        nodes=solved,
        wall_time=wall_time,
    )
