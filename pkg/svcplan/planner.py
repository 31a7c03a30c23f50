import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd

from .acpf import ValidationReport, validate
from .bnb import (
    AllocationResult,
    BnbSettings,
    accept_incumbent,
    enumerate_placements,
    evaluate_allocation,
    solve_misocp,
    summarize,
)
from .case_reader import ieee30_case, load_case, load_scenarios
from .conic import SolverSettings, solve_with_fixings
from .exceptions import MissingCellError, NumericalFailure, SvcPlanException
from .micp import SvcSpec, WeightScheme, build_micp
from .network import NetworkCase, ScenarioSet, build_scenarios, rescale_base_load
from .settings import (
    DEFAULT_ALPHA,
    DEFAULT_EPS_THETA,
    DEFAULT_HALF_CHARGING,
    DEFAULT_SVC_RANGE,
    REFERENCE_BASE_LOAD,
    REFERENCE_CELLS,
    REFERENCE_DEVIATION_TOL,
    REFERENCE_LOSS_TOL,
    TABLE_I_SCENARIOS,
    WEIGHT_PRESETS,
)
from .utils import finite_or_none, json_set_default

logger = logging.getLogger(__name__)

TABLE3_COLUMNS = (
    "weights",
    "n_v",
    "status",
    "locations",
    "loss_mw",
    "loss_pu",
    "qloss_mvar",
    "qloss_pu",
    "deviation_sq",
    "deviation_abs",
    "objective",
    "max_cone_mismatch",
    "gap",
    "nodes",
)


@dataclass
class RunConfig:
    """
    One planning sweep. `case` and `scenarios` default to the bundled IEEE 30-bus
    case and the 15-scenario load table; `weights` holds (label, scheme) pairs.
    `base_load` optionally rescales the case to (MW, MVAr) totals.
    """

    case: Optional[str] = None
    scenarios: Optional[str] = None
    weights: list = field(default_factory=lambda: [("case1", WeightScheme.preset("case1"))])
    nv: list = field(default_factory=lambda: [1, 2, 3, 4, 5])
    svc_range: tuple = DEFAULT_SVC_RANGE
    alpha: float = DEFAULT_ALPHA
    eps_theta: float = DEFAULT_EPS_THETA
    half_charging: bool = DEFAULT_HALF_CHARGING
    solver: SolverSettings = field(default_factory=SolverSettings)
    bnb: BnbSettings = field(default_factory=BnbSettings)
    out: Optional[str] = None
    validate: bool = False
    workers: int = 1
    seed: Optional[int] = None
    plot_scenarios: list = field(default_factory=list)
    base_load: Optional[tuple] = None

    def __post_init__(self):
        if any(n < 0 for n in self.nv):
            raise ValueError(f"N_v values must be >= 0, got {self.nv}")
        if self.svc_range[0] > self.svc_range[1]:
            raise ValueError(f"SVC range is empty: {self.svc_range}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if not self.weights:
            raise ValueError("at least one weight scheme is required")
        if self.base_load is not None and not (len(self.base_load) == 2 and min(self.base_load) > 0):
            raise ValueError(f"base_load must be a positive (MW, MVAr) pair, got {self.base_load}")

    @property
    def uses_bundled_study(self) -> bool:
        """Bundled case with the built-in scenario table, the setting the reference figures describe."""
        return self.case is None and self.scenarios is None

    def load_case(self) -> NetworkCase:
        case = ieee30_case() if self.case is None else load_case(self.case)
        if self.base_load is not None:
            case = rescale_base_load(case, *self.base_load)
        return case

    def load_scenarios(self) -> ScenarioSet:
        return build_scenarios(TABLE_I_SCENARIOS) if self.scenarios is None else load_scenarios(self.scenarios)

    def to_dict(self) -> dict:
        return {
            "case": self.case,
            "scenarios": self.scenarios,
            "weights": {label: w.to_dict() for label, w in self.weights},
            "nv": list(self.nv),
            "svc_range": list(self.svc_range),
            "alpha": self.alpha,
            "eps_theta": self.eps_theta,
            "half_charging": self.half_charging,
            "base_load": list(self.base_load) if self.base_load is not None else None,
            "solver": self.solver.to_dict(),
            "bnb": self.bnb.to_dict(),
            "validate": self.validate,
        }


@dataclass
class RunCell:
    label: str
    n_v: int
    result: Optional[AllocationResult] = None
    validation: Optional[ValidationReport] = None
    error: Optional[str] = None
    reference: Optional[dict] = None
    node_log: str = field(default="", repr=False)
    solver_log: str = field(default="", repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "weights": self.label,
            "n_v": self.n_v,
            "error": self.error,
            "result": self.result.to_dict() if self.result is not None else None,
            "validation": self.validation.to_dict() if self.validation is not None else None,
            "reference": self.reference,
        }


@dataclass
class RunReport:
    config: RunConfig
    baselines: dict
    cells: list
    data_dialect: Optional[dict] = None

    @property
    def failed(self) -> list:
        return [c for c in list(self.baselines.values()) + self.cells if not c.ok]

    def cell(self, label: str, n_v: int) -> RunCell:
        if n_v == 0 and label in self.baselines:
            return self.baselines[label]
        for c in self.cells:
            if c.label == label and c.n_v == n_v:
                return c
        raise MissingCellError(f"no result for weights {label!r} with N_v={n_v}")

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "data_dialect": self.data_dialect,
            "baselines": {label: c.to_dict() for label, c in self.baselines.items()},
            "cells": [c.to_dict() for c in self.cells],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=json_set_default)

    def table3(self) -> pd.DataFrame:
        rows = []
        for label, _ in self.config.weights:
            ordered = [self.baselines[label]] + [c for c in self.cells if c.label == label]
            for c in ordered:
                r = c.result
                if r is None or not r.scenarios:
                    rows.append({"weights": label, "n_v": c.n_v, "status": c.error or (r.status if r else "")})
                    continue
                rows.append(
                    {
                        "weights": label,
                        "n_v": c.n_v,
                        "status": r.status,
                        "locations": " ".join(str(b) for b in r.chosen_buses),
                        "loss_mw": r.loss_mw,
                        "loss_pu": r.loss_pu,
                        "qloss_mvar": r.qloss_mvar,
                        "qloss_pu": r.qloss_pu,
                        "deviation_sq": r.deviation_sq,
                        "deviation_abs": r.deviation_abs,
                        "objective": r.objective,
                        "max_cone_mismatch": r.max_cone_mismatch,
                        "gap": r.gap,
                        "nodes": r.nodes,
                    }
                )
        return pd.DataFrame(rows, columns=list(TABLE3_COLUMNS))

    def render_table3(self) -> str:
        return self.table3().to_string(index=False, float_format=lambda v: f"{v:.4g}", na_rep="")


def _baseline(program, index, solver_settings) -> tuple[AllocationResult, str]:
    """No-SVC operating point, gated like a branch-and-bound incumbent."""
    fixings = {int(p): 0 for p in index.delta_positions()}
    log = io.StringIO()
    solution = solve_with_fixings(program, fixings, solver_settings, log)
    if accept_incumbent(solution, solver_settings) is None:
        raise NumericalFailure(f"baseline solve ended with {solution.status.value}: {solution.message}")
    return summarize(program, index, solution.x, status="optimal"), log.getvalue()


def data_dialect(case: NetworkCase) -> dict:
    """Base load of `case` next to the totals the reference figures were produced with."""
    p, q = case.total_load()
    ref_p, ref_q = REFERENCE_BASE_LOAD
    return {
        "base_load_mw": p,
        "base_load_mvar": q,
        "reference_base_load_mw": ref_p,
        "reference_base_load_mvar": ref_q,
        "matches_reference": abs(p - ref_p) <= 0.005 * ref_p and abs(q - ref_q) <= 0.005 * ref_q,
    }


def reference_for(config: RunConfig, label: str, weights: WeightScheme, n_v: int) -> Optional[dict]:
    """Reference figures for a cell of the bundled study, None for anything else."""
    if not config.uses_bundled_study or tuple(config.svc_range) != DEFAULT_SVC_RANGE:
        return None
    if WEIGHT_PRESETS.get(label) != (weights.a1, weights.a2):
        return None
    return REFERENCE_CELLS.get((label, n_v))


def check_reference(
    expected: dict,
    result: AllocationResult,
    program,
    index,
    solver_settings: SolverSettings = None,
    baseline: Optional[AllocationResult] = None,
) -> dict:
    """
    Grade `result` against reference figures.

    When the SVC locations differ, the reference allocation is solved with
    its deltas fixed and `chosen_not_worse` records whether ours scores at
    least as well. For a single SVC every placement is enumerated as well.
    """
    tol = max(1e-6, 1e-6 * abs(result.objective))
    loss_error = abs(result.loss_mw - expected["loss_mw"]) / expected["loss_mw"]
    check = {
        "expected_loss_mw": expected["loss_mw"],
        "loss_mw": result.loss_mw,
        "loss_error": loss_error,
        "loss_ok": loss_error <= REFERENCE_LOSS_TOL,
    }
    if "deviation_sq" in expected:
        deviation_error = abs(result.deviation_sq - expected["deviation_sq"]) / expected["deviation_sq"]
        check.update(
            expected_deviation_sq=expected["deviation_sq"],
            deviation_sq=result.deviation_sq,
            deviation_error=deviation_error,
            deviation_ok=deviation_error <= REFERENCE_DEVIATION_TOL,
        )
    if "locations" in expected:
        locations = tuple(expected["locations"])
        check["expected_locations"] = list(locations)
        check["locations_match"] = tuple(sorted(result.chosen_buses)) == locations
        if not check["locations_match"]:
            solution = evaluate_allocation(program, index, locations, solver_settings)
            reference = solution.objective if solution is not None else math.inf
            check["reference_objective"] = finite_or_none(reference)
            check["chosen_not_worse"] = result.objective <= reference + tol
            if len(locations) == 1:
                placements = enumerate_placements(program, index, solver_settings)
                best = min(placements, key=lambda bus: (placements[bus], bus))
                check["placements"] = {str(bus): finite_or_none(v) for bus, v in placements.items()}
                check["best_placement"] = best
                check["matches_enumeration"] = result.objective <= placements[best] + tol
    if "peak_scenario" in expected and baseline is not None:
        check["expected_peak_scenario"] = expected["peak_scenario"]
        check["peak_scenario"] = _largest_drop(baseline, result)
        check["peak_ok"] = check["peak_scenario"] == expected["peak_scenario"]
    verdicts = ("loss_ok", "deviation_ok", "locations_match", "chosen_not_worse", "matches_enumeration", "peak_ok")
    check["deviates"] = not all(check[k] for k in verdicts if k in check)
    if check["deviates"]:
        logger.warning("result differs from the reference figures: %s", {k: v for k, v in check.items() if k != "placements"})
    return check


def run(config: RunConfig) -> RunReport:
    """
    Run the baseline and every (weights, N_v) cell of `config`.

    Budgets of one weight scheme are solved in increasing order, each
    branch-and-bound starting from the allocation of the budget before it, so
    objectives never increase with N_v. Weight schemes run in parallel when
    `config.workers` > 1. A failing cell is recorded with its error and the
    sweep continues. When `config.out` is set the report, table, logs and
    plot data are written there.

    Example usage:
    ```
    from svcplan import RunConfig, WeightScheme, run

    report = run(RunConfig(weights=[("case1", WeightScheme.preset("case1"))], nv=[1]))
    print(report.render_table3())
    ```
    """
    case = config.load_case()
    scenarios = config.load_scenarios()
    logger.info("loaded %s with %d scenarios", case, len(scenarios))

    def solve_cell(label: str, weights: WeightScheme, n_v: int, start, baseline) -> RunCell:
        cell = RunCell(label, n_v)
        svc = SvcSpec(config.svc_range[0], config.svc_range[1], n_v)
        try:
            program, index = build_micp(
                case, scenarios, weights, svc, eps_theta=config.eps_theta, half_charging=config.half_charging
            )
            if n_v == 0:
                cell.result, cell.solver_log = _baseline(program, index, config.solver)
            else:
                nodes, iterations = io.StringIO(), io.StringIO()
                cell.result = solve_misocp(
                    program,
                    index,
                    config.bnb,
                    solver_settings=config.solver,
                    node_log=nodes,
                    solver_log=iterations,
                    start=start,
                )
                cell.node_log, cell.solver_log = nodes.getvalue(), iterations.getvalue()
            expected = reference_for(config, label, weights, n_v)
            if expected is not None and cell.result.scenarios:
                cell.reference = check_reference(expected, cell.result, program, index, config.solver, baseline)
            if config.validate and cell.result.scenarios:
                cell.validation = validate(cell.result, case, scenarios)
        except SvcPlanException as exc:
            logger.error("cell %s N_v=%d failed: %s", label, n_v, exc.message)
            cell.error = exc.message
        except (ValueError, np.linalg.LinAlgError) as exc:
            logger.error("cell %s N_v=%d failed: %s", label, n_v, exc)
            cell.error = str(exc)
        else:
            logger.info("cell %s N_v=%d: %r", label, n_v, cell.result)
        return cell

    budgets = sorted({n_v for n_v in config.nv if n_v > 0})

    def solve_chain(label: str, weights: WeightScheme) -> list[RunCell]:
        weights = WeightScheme(weights.a1, weights.a2, config.alpha)
        base = solve_cell(label, weights, 0, None, None)
        baseline = base.result if base.ok else None
        chain, start = [base], () if base.ok else None
        for n_v in budgets:
            cell = solve_cell(label, weights, n_v, start, baseline)
            chain.append(cell)
            if cell.ok and cell.result.scenarios:
                start = cell.result.chosen_buses
        return chain

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            chains = list(pool.map(lambda item: solve_chain(*item), config.weights))
    else:
        chains = [solve_chain(label, weights) for label, weights in config.weights]
    done = [cell for chain in chains for cell in chain]

    report = RunReport(
        config=config,
        baselines={c.label: c for c in done if c.n_v == 0},
        cells=[c for c in done if c.n_v > 0],
        data_dialect=data_dialect(case) if config.uses_bundled_study else None,
    )
    if report.data_dialect is not None and not report.data_dialect["matches_reference"]:
        logger.warning(
            "bundled case base load %.1f MW / %.1f MVAr differs from the reference %.1f MW / %.1f MVAr",
            report.data_dialect["base_load_mw"],
            report.data_dialect["base_load_mvar"],
            *REFERENCE_BASE_LOAD,
        )
    if config.out is not None:
        write_report(report, config.out)
    return report


def write_report(report: RunReport, out: Union[str, Path]) -> list[Path]:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.json", out / "table3.csv"]
    written[0].write_text(report.to_json())
    report.table3().to_csv(written[1], index=False)
    for c in list(report.baselines.values()) + report.cells:
        for prefix, text in (("nodes", c.node_log), ("solver", c.solver_log)):
            if text:
                path = out / f"{prefix}_{c.label}_nv{c.n_v}.csv"
                path.write_text(text)
                written.append(path)
    labels = [label for label, _ in report.config.weights]
    for label in labels:
        target = out if len(labels) == 1 else out / label
        cells = [c for c in report.cells if c.label == label and c.result is not None and c.result.scenarios]
        if not cells or not report.baselines[label].ok:
            continue
        n_v = max(c.n_v for c in cells)
        written += emit_plot_data(report, report.config.plot_scenarios, target, label=label, n_v=n_v)
    return written


def emit_plot_data(
    report: RunReport,
    scenario_ids: Sequence[int],
    out: Union[str, Path],
    label: Optional[str] = None,
    n_v: Optional[int] = None,
) -> list[Path]:
    """
    Write `loss_by_scenario.csv` (scenario, loss_no_svc, loss_with_svc in MW)
    and one `voltage_profile_s<k>.csv` (bus, v_no_svc, v_with_svc) per
    requested 1-based scenario id. The cell defaults to the first weight
    scheme at its largest N_v.
    """
    label = report.config.weights[0][0] if label is None else label
    if n_v is None:
        candidates = [c.n_v for c in report.cells if c.label == label]
        if not candidates:
            raise MissingCellError(f"no SVC cells for weights {label!r}")
        n_v = max(candidates)
    cell = report.cell(label, n_v)
    if label not in report.baselines:
        raise MissingCellError(f"no baseline for weights {label!r}")
    base = report.baselines[label]
    for c in (base, cell):
        if c.result is None or not c.result.scenarios:
            raise MissingCellError(f"cell {c.label} N_v={c.n_v} has no solution ({c.error or c.result.status})")
    n_scenarios = len(cell.result.scenarios)
    for k in scenario_ids:
        if not 1 <= k <= n_scenarios:
            raise MissingCellError(f"scenario {k} not in report (1..{n_scenarios})")

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    loss = pd.DataFrame(
        {
            "scenario": [o.scenario for o in cell.result.scenarios],
            "loss_no_svc": [o.loss_mw for o in base.result.scenarios],
            "loss_with_svc": [o.loss_mw for o in cell.result.scenarios],
        }
    )
    paths = [out / "loss_by_scenario.csv"]
    loss.to_csv(paths[0], index=False)
    for k in scenario_ids:
        profile = pd.DataFrame(
            {
                "bus": list(cell.result.bus_ids),
                "v_no_svc": base.result.scenarios[k - 1].voltage,
                "v_with_svc": cell.result.scenarios[k - 1].voltage,
            }
        )
        path = out / f"voltage_profile_s{k}.csv"
        profile.to_csv(path, index=False)
        paths.append(path)
    return paths


def _largest_drop(base: AllocationResult, result: AllocationResult) -> int:
    drops = [b.loss_mw - c.loss_mw for b, c in zip(base.scenarios, result.scenarios)]
    if not drops:
        raise MissingCellError("no per-scenario results to compare")
    return int(np.argmax(drops)) + 1


def largest_reduction(report: RunReport, label: str, n_v: int) -> int:
    """1-based scenario with the largest loss reduction against the baseline."""
    base, cell = report.cell(label, 0), report.cell(label, n_v)
    if base.result is None or cell.result is None:
        raise MissingCellError(f"weights {label!r}: baseline or N_v={n_v} has no result")
    return _largest_drop(base.result, cell.result)
