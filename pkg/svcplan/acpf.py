"""
AC power flow referee for allocation results.

The admittance matrix follows the pi-model used throughout the package: the
off-nominal tap t = tau * exp(j theta_ps) sits on the sending side, half of
the charging susceptance at each terminal. SVCs enter as constant shunt
susceptances.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import pandas as pd
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .bnb import AllocationResult, ScenarioOutcome, cone_slack
from .lfb import build_cycle_basis, loop_residuals
from .network import Load, NetworkCase, ScenarioSet, bus_demand, scale_loads
from .settings import DEFAULT_NR_MAX_ITERS, DEFAULT_NR_TOL
from .utils import json_set_default

logger = logging.getLogger(__name__)


@dataclass(eq=False)
class AcSolution:
    bus_ids: tuple
    vm: np.ndarray
    va: np.ndarray
    s_from: np.ndarray
    s_to: np.ndarray
    loss_mw: float
    iterations: int
    mismatch: float
    converged: bool
    trace: list = field(default_factory=list)

    @property
    def voltage(self) -> np.ndarray:
        return self.vm * np.exp(1j * self.va)

    def __repr__(self) -> str:
        return (
            f"AcSolution(converged={self.converged}, iterations={self.iterations}, "
            f"mismatch={self.mismatch:.2e}, loss_mw={self.loss_mw:.6f})"
        )


def make_ybus(case: NetworkCase, svc_fixings: Mapping[int, float] = None) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Bus admittance matrix plus the from/to branch admittance matrices."""
    n, nl = len(case.buses), len(case.branches)
    ys = np.array([1.0 / complex(br.r, br.x) for br in case.branches], dtype=complex)
    bc = np.array([br.b_ch for br in case.branches])
    tap = np.array([br.tau * np.exp(1j * br.theta_ps) for br in case.branches], dtype=complex)
    ytt = ys + 0.5j * bc
    yff = ytt / (tap * np.conj(tap))
    yft = -ys / np.conj(tap)
    ytf = -ys / tap

    shunt = np.array([bus.shunt_b for bus in case.buses], dtype=float)
    for bus_id, b in (svc_fixings or {}).items():
        shunt[case.bus_position(bus_id)] += b

    f = np.array([case.bus_position(br.from_bus) for br in case.branches], dtype=int)
    t = np.array([case.bus_position(br.to_bus) for br in case.branches], dtype=int)
    rows = np.arange(nl)
    yf = sp.csr_matrix((np.concatenate([yff, yft]), (np.concatenate([rows, rows]), np.concatenate([f, t]))), (nl, n))
    yt = sp.csr_matrix((np.concatenate([ytf, ytt]), (np.concatenate([rows, rows]), np.concatenate([f, t]))), (nl, n))
    cf = sp.csr_matrix((np.ones(nl), (rows, f)), (nl, n))
    ct = sp.csr_matrix((np.ones(nl), (rows, t)), (nl, n))
    ybus = cf.T @ yf + ct.T @ yt + sp.diags(1j * shunt)
    return ybus.tocsr(), yf, yt


def _ds_dv(ybus: sp.csr_matrix, v: np.ndarray):
    ibus = ybus @ v
    diag_v = sp.diags(v)
    diag_i = sp.diags(ibus)
    diag_vnorm = sp.diags(v / np.abs(v))
    ds_dvm = diag_v @ (ybus @ diag_vnorm).conj() + diag_i.conj() @ diag_vnorm
    ds_dva = 1j * diag_v @ (diag_i - ybus @ diag_v).conj()
    return ds_dvm.tocsr(), ds_dva.tocsr()


def newton_raphson(
    case: NetworkCase,
    loads: Sequence[Load],
    svc_fixings: Mapping[int, float] = None,
    slack_bus: Optional[int] = None,
    generation: Mapping[int, float] = None,
    voltage_setpoints: Mapping[int, float] = None,
    max_iters: int = DEFAULT_NR_MAX_ITERS,
    tol: float = DEFAULT_NR_TOL,
) -> AcSolution:
    """
    Polar Newton-Raphson power flow.

    Args:
        - case (NetworkCase): the network
        - loads (list[Load]): demand to serve
        - svc_fixings (dict): bus id -> SVC susceptance (p.u.)
        - slack_bus (int): reference bus, defaults to the first bus
        - generation (dict): bus id -> fixed real generation (p.u.); these buses are PV
        - voltage_setpoints (dict): bus id -> voltage magnitude of PV and slack buses
        - max_iters (int): Newton iterations before giving up
        - tol (float): infinity-norm mismatch tolerance (p.u.)

    Every other bus is PQ. PQ buses start at 1 p.u., angles at 0. A run that
    does not reach `tol` returns converged=False.
    """
    generation = dict(generation or {})
    setpoints = dict(voltage_setpoints or {})
    slack_bus = case.buses[0].id if slack_bus is None else slack_bus
    ybus, yf, yt = make_ybus(case, svc_fixings)
    n = len(case.buses)
    ref = case.bus_position(slack_bus)
    pv_set = {case.bus_position(b) for b in generation if b != slack_bus}
    pv = np.array(sorted(pv_set), dtype=int)
    pq = np.array([i for i in range(n) if i != ref and i not in pv_set], dtype=int)
    pvpq = np.concatenate([pv, pq]).astype(int)

    p_d, q_d = bus_demand(case, loads)
    p_g = np.zeros(n)
    for bus_id, p in generation.items():
        p_g[case.bus_position(bus_id)] += p
    s_bus = (p_g - p_d) - 1j * q_d

    vm = np.ones(n)
    for bus_id, v in setpoints.items():
        pos = case.bus_position(bus_id)
        if pos == ref or pos in pv_set:
            vm[pos] = v
    va = np.zeros(n)
    v = vm * np.exp(1j * va)

    def mismatch_vector(v):
        mis = v * np.conj(ybus @ v) - s_bus
        return np.concatenate([mis[pvpq].real, mis[pq].imag])

    trace = []
    f = mismatch_vector(v)
    norm = float(np.linalg.norm(f, np.inf)) if len(f) else 0.0
    trace.append(norm)
    converged = norm < tol
    iterations = 0
    while not converged and iterations < max_iters:
        iterations += 1
        ds_dvm, ds_dva = _ds_dv(ybus, v)
        j11 = ds_dva[pvpq][:, pvpq].real
        j12 = ds_dvm[pvpq][:, pq].real
        j21 = ds_dva[pq][:, pvpq].imag
        j22 = ds_dvm[pq][:, pq].imag
        jac = sp.bmat([[j11, j12], [j21, j22]], format="csc")
        with np.errstate(all="ignore"):
            dx = -spsolve(jac, f)
        if not np.all(np.isfinite(dx)):
            logger.warning("power flow: singular Jacobian at iteration %d", iterations)
            break
        va[pvpq] += dx[: len(pvpq)]
        vm[pq] += dx[len(pvpq) :]
        v = vm * np.exp(1j * va)
        f = mismatch_vector(v)
        norm = float(np.linalg.norm(f, np.inf))
        trace.append(norm)
        converged = norm < tol
        if not math.isfinite(norm):
            break

    if not converged:
        logger.warning("power flow did not converge after %d iterations (mismatch %.3e)", iterations, norm)
    vm, va = np.abs(v), np.angle(v)
    va = va - va[ref]
    v = vm * np.exp(1j * va)
    f_idx = [case.bus_position(br.from_bus) for br in case.branches]
    t_idx = [case.bus_position(br.to_bus) for br in case.branches]
    s_from = v[f_idx] * np.conj(yf @ v)
    s_to = v[t_idx] * np.conj(yt @ v)
    loss = float(np.sum((s_from + s_to).real)) * case.base_mva
    return AcSolution(
        bus_ids=tuple(case.bus_ids),
        vm=vm,
        va=va,
        s_from=s_from,
        s_to=s_to,
        loss_mw=loss,
        iterations=iterations,
        mismatch=norm,
        converged=converged,
        trace=trace,
    )


def bus_mismatch(case: NetworkCase, solution: AcSolution, loads: Sequence[Load], svc_fixings=None) -> np.ndarray:
    """Complex injection per bus V conj(Y V) + demand; zero at PQ buses without generation."""
    ybus, _, _ = make_ybus(case, svc_fixings)
    v = solution.voltage
    p_d, q_d = bus_demand(case, loads)
    return v * np.conj(ybus @ v) + (p_d + 1j * q_d)


@dataclass
class ScenarioValidation:
    scenario: int
    lfb_loss_mw: float
    ac_loss_mw: float
    loss_rel_error: float
    max_voltage_error: float
    max_loop_residual: float
    max_cone_mismatch: float
    max_cone_violation: float
    converged: bool
    iterations: int
    trace: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "lfb_loss_mw": self.lfb_loss_mw,
            "ac_loss_mw": self.ac_loss_mw,
            "loss_rel_error": self.loss_rel_error,
            "max_voltage_error": self.max_voltage_error,
            "max_loop_residual": self.max_loop_residual,
            "max_cone_mismatch": self.max_cone_mismatch,
            "max_cone_violation": self.max_cone_violation,
            "converged": self.converged,
            "iterations": self.iterations,
        }


@dataclass
class ValidationReport:
    scenarios: list

    def _converged(self) -> list:
        return [s for s in self.scenarios if s.converged]

    @property
    def diverged(self) -> list[int]:
        return [s.scenario for s in self.scenarios if not s.converged]

    @property
    def max_loss_error(self) -> float:
        return max((s.loss_rel_error for s in self._converged()), default=0.0)

    @property
    def max_voltage_error(self) -> float:
        return max((s.max_voltage_error for s in self._converged()), default=0.0)

    @property
    def max_loop_residual(self) -> float:
        return max((s.max_loop_residual for s in self.scenarios), default=0.0)

    @property
    def max_cone_mismatch(self) -> float:
        return max((s.max_cone_mismatch for s in self.scenarios), default=0.0)

    @property
    def max_cone_violation(self) -> float:
        return max((s.max_cone_violation for s in self.scenarios), default=0.0)

    def to_dict(self) -> dict:
        return {
            "scenarios": [s.to_dict() for s in self.scenarios],
            "max_loss_error": self.max_loss_error,
            "max_voltage_error": self.max_voltage_error,
            "max_loop_residual": self.max_loop_residual,
            "max_cone_mismatch": self.max_cone_mismatch,
            "max_cone_violation": self.max_cone_violation,
            "diverged": self.diverged,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=json_set_default)

    def render_table(self) -> str:
        frame = pd.DataFrame([s.to_dict() for s in self.scenarios]).set_index("scenario")
        return frame.to_string(float_format=lambda v: f"{v:.6g}")


def _validate_scenario(
    case: NetworkCase, outcome: ScenarioOutcome, loads: Sequence[Load], slack_bus: int, basis
) -> ScenarioValidation:
    generation: dict[int, float] = {}
    for g, gen in enumerate(case.generators):
        generation[gen.bus] = generation.get(gen.bus, 0.0) + float(outcome.pg[g])
    setpoints = {bus: float(outcome.voltage[case.bus_position(bus)]) for bus in generation}
    ac = newton_raphson(
        case,
        loads,
        svc_fixings=outcome.susceptance,
        slack_bus=slack_bus,
        generation=generation,
        voltage_setpoints=setpoints,
    )
    residuals = loop_residuals(case, basis, outcome.pr, outcome.qr)
    w_to = outcome.w[[case.bus_position(br.to_bus) for br in case.branches]]
    cone_gap = cone_slack(outcome.cone_aux, w_to, outcome.pr, outcome.qr)
    rel = abs(ac.loss_mw - outcome.loss_mw) / max(abs(ac.loss_mw), 1e-12)
    return ScenarioValidation(
        scenario=outcome.scenario,
        lfb_loss_mw=outcome.loss_mw,
        ac_loss_mw=ac.loss_mw,
        loss_rel_error=rel,
        max_voltage_error=float(np.max(np.abs(outcome.voltage - ac.vm))),
        max_loop_residual=float(np.max(np.abs(residuals))) if len(residuals) else 0.0,
        max_cone_mismatch=max(float(np.max(cone_gap)), 0.0) if len(cone_gap) else 0.0,
        max_cone_violation=max(-float(np.min(cone_gap)), 0.0) if len(cone_gap) else 0.0,
        converged=ac.converged,
        iterations=ac.iterations,
        trace=ac.trace,
    )


def validate(result: AllocationResult, case: NetworkCase, scenarios: ScenarioSet, workers: int = 1) -> ValidationReport:
    """
    Re-run every scenario of `result` through the AC power flow.

    The largest generator (by p_max) is the slack bus; the other generator buses
    are PV at their model dispatch and voltage. Divergent scenarios are
    flagged and left out of the loss and voltage maxima.
    """
    slack_bus = max(case.generators, key=lambda g: g.p_max).bus if case.generators else case.buses[0].id
    basis = build_cycle_basis(case)

    def one(outcome: ScenarioOutcome) -> ScenarioValidation:
        loads = scale_loads(case, scenarios[outcome.scenario - 1])
        return _validate_scenario(case, outcome, loads, slack_bus, basis)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, result.scenarios))
    else:
        rows = [one(outcome) for outcome in result.scenarios]
    report = ValidationReport(rows)
    if report.diverged:
        logger.warning("AC validation diverged in scenario(s) %s", report.diverged)
    return report
