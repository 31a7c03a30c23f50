"""
Primal-dual interior-point solver for ConicProgram relaxations.

Internally the program is brought to

    minimize c'x  subject to  A x = b,  G x + s = h,  s in K

with K a product of a nonnegative orthant (variable bounds and nonnegative
blocks) and second-order cones. Rotated cones map to second-order cones
through t = (u + v)/sqrt(2), y = (u - v)/sqrt(2). The homogeneous self-dual
embedding is followed with Nesterov-Todd scaling and a Mehrotra
predictor-corrector step.
"""

import csv
import logging
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Mapping, Optional, TextIO

import numpy as np
import scipy.sparse as sp

from .cones import ConeLayout
from .exceptions import ContractViolation, NumericalFailure, PreconditionError
from .kkt import KktSystem
from .program import ConeKind, ConicProgram
from .settings import (
    DEFAULT_FEAS_TOL,
    DEFAULT_GAP_TOL,
    DEFAULT_MAX_ITERS,
    DEFAULT_REFINEMENT_STEPS,
    DEFAULT_REGULARIZATION,
    DEFAULT_STEP_FRACTION,
)

logger = logging.getLogger(__name__)

LOG_FIELDS = ("iter", "mu", "pres", "dres", "gap", "pcost", "dcost", "sigma", "alpha_aff", "alpha")

_SQRT_HALF = math.sqrt(0.5)


def _diag(v: np.ndarray) -> sp.csr_matrix:
    return sp.diags(v, format="csr") if len(v) else sp.csr_matrix((0, 0))


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ITERATION_LIMIT = "iteration_limit"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class SolverSettings:
    feas_tol: float = DEFAULT_FEAS_TOL
    gap_tol: float = DEFAULT_GAP_TOL
    max_iters: int = DEFAULT_MAX_ITERS
    step_fraction: float = DEFAULT_STEP_FRACTION
    regularization: float = DEFAULT_REGULARIZATION
    refinement_steps: int = DEFAULT_REFINEMENT_STEPS
    equilibration_iters: int = 15
    # checks weak duality on every iterate
    debug: bool = False

    def __post_init__(self):
        if not (self.feas_tol > 0 and self.gap_tol > 0):
            raise ValueError("solver tolerances must be > 0")
        if not 0 < self.step_fraction < 1:
            raise ValueError(f"step_fraction must lie in (0, 1), got {self.step_fraction}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverSettings":
        return cls(**data)


@dataclass(frozen=True)
class ResidualReport:
    primal: float
    dual: float
    gap: float

    def within(self, feas_tol: float, gap_tol: float) -> bool:
        return self.primal <= feas_tol and self.dual <= feas_tol and self.gap <= gap_tol

    def worst(self) -> float:
        return max(self.primal, self.dual, self.gap)


@dataclass(eq=False)
class ConicSolution:
    """
    Result of a relaxation solve.

    `y` holds the equality multipliers under the Lagrangian c'x - y'(Ax - b),
    so `dual_cone = c - A'y` is the multiplier of the cone and bound
    constraints. For INFEASIBLE, `certificate` holds the equality part y of a
    Farkas ray of the internal form (A'y + G'z = 0, z in K, b'y + h'z = -1);
    for UNBOUNDED it is a primal ray with c'x = -1.
    """

    status: SolveStatus
    x: np.ndarray
    y: np.ndarray
    dual_cone: np.ndarray
    objective: float
    residuals: ResidualReport
    iterations: int = 0
    certificate: Optional[np.ndarray] = field(default=None, repr=False)
    message: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status == SolveStatus.OPTIMAL

    def __repr__(self) -> str:
        return (
            f"ConicSolution(status={self.status.value}, objective={self.objective:.10g}, "
            f"iterations={self.iterations}, residuals={self.residuals})"
        )


class _StandardForm:
    """Presolved, equilibrated internal form of a ConicProgram."""

    def __init__(self, program: ConicProgram, settings: SolverSettings):
        self.program = program
        n = program.n
        lower, upper = program.lower, program.upper
        fixed = np.isfinite(lower) & (lower == upper)
        self.x_template = np.where(fixed, lower, 0.0)

        kinds = np.empty(n, dtype=object)
        for block in program.blocks:
            kinds[block.start : block.stop] = block.kind
        in_nonneg = kinds == ConeKind.NONNEG
        eff_lower = np.where(in_nonneg, np.maximum(lower, 0.0), lower)

        # nonnegative rows from bounds: -x + s = -l and x + s = u
        lo_cols = np.flatnonzero(np.isfinite(eff_lower) & ~fixed)
        hi_cols = np.flatnonzero(np.isfinite(upper) & ~fixed)
        g_rows, g_cols, g_vals = [], [], []
        n_nonneg = len(lo_cols) + len(hi_cols)
        g_rows.append(np.arange(len(lo_cols)))
        g_cols.append(lo_cols)
        g_vals.append(-np.ones(len(lo_cols)))
        g_rows.append(len(lo_cols) + np.arange(len(hi_cols)))
        g_cols.append(hi_cols)
        g_vals.append(np.ones(len(hi_cols)))
        h = [-eff_lower[lo_cols], upper[hi_cols]]

        soc_sizes = []
        row = n_nonneg
        for block in program.blocks:
            if block.kind not in (ConeKind.SOC, ConeKind.RSOC):
                continue
            cols = np.arange(block.start, block.stop)
            if block.kind == ConeKind.SOC:
                g_rows.append(row + np.arange(block.size))
                g_cols.append(cols)
                g_vals.append(-np.ones(block.size))
            else:
                g_rows.append(np.array([row, row, row + 1, row + 1]))
                g_cols.append(np.array([cols[0], cols[1], cols[0], cols[1]]))
                g_vals.append(np.array([-_SQRT_HALF, -_SQRT_HALF, -_SQRT_HALF, _SQRT_HALF]))
                g_rows.append(row + np.arange(2, block.size))
                g_cols.append(cols[2:])
                g_vals.append(-np.ones(block.size - 2))
            h.append(np.zeros(block.size))
            soc_sizes.append(block.size)
            row += block.size
        g_full = sp.csr_matrix(
            (np.concatenate(g_vals), (np.concatenate(g_rows), np.concatenate(g_cols))), shape=(row, n)
        )
        h_full = np.concatenate(h) if h else np.zeros(0)
        self.layout = ConeLayout(n_nonneg, soc_sizes)

        x_fixed = self.x_template
        a_full = program.a.tocsc()
        g_full = g_full.tocsc()
        b = program.b - a_full @ x_fixed
        h_full = h_full - g_full @ x_fixed
        self.constant = float(program.c @ x_fixed)
        free = np.flatnonzero(~fixed)
        a = a_full[:, free].tocsr()
        g = g_full[:, free].tocsr()
        c = program.c[free]

        self.infeasible_row: Optional[int] = None
        self.unbounded_col: Optional[int] = None

        row_nnz = np.diff(a.indptr)
        empty_rows = np.flatnonzero(row_nnz == 0)
        bad = empty_rows[np.abs(b[empty_rows]) > settings.feas_tol * (1.0 + np.abs(program.b[empty_rows]))]
        if len(bad):
            self.infeasible_row = int(bad[0])
            self.infeasible_rhs = float(b[bad[0]])
        self.rows = np.flatnonzero(row_nnz > 0)
        a = a[self.rows]
        b = b[self.rows]

        col_nnz = np.diff(a.tocsc().indptr) + np.diff(g.tocsc().indptr)
        empty_cols = np.flatnonzero(col_nnz == 0)
        moving = empty_cols[c[empty_cols] != 0.0]
        if len(moving):
            self.unbounded_col = int(free[moving[0]])
        keep = np.flatnonzero(col_nnz > 0)
        self.cols = free[keep]
        self.a = a[:, keep].tocsr()
        self.g = g[:, keep].tocsr()
        self.c = c[keep]
        self.b = b
        self.h = h_full
        self._equilibrate(settings.equilibration_iters)

    def _equilibrate(self, iters: int):
        """Ruiz equilibration; rows of one second-order cone share a factor."""
        n, p, m = self.a.shape[1], self.a.shape[0], self.g.shape[0]
        d = np.ones(n)
        e = np.ones(p + m)
        stacked = sp.vstack([self.a, self.g]).tocsr() if p + m else sp.csr_matrix((0, n))
        for _ in range(iters):
            scaled = abs(_diag(e) @ stacked @ _diag(d))
            if scaled.nnz == 0:
                break
            col = np.asarray(scaled.max(axis=0).todense()).ravel()
            rows = np.asarray(scaled.max(axis=1).todense()).ravel()
            tail = rows[p:]
            for idx in self.layout.groups.values():
                tail[idx] = tail[idx].max(axis=1, keepdims=True)
            d /= np.sqrt(np.where(col > 0, col, 1.0))
            e /= np.sqrt(np.where(rows > 0, rows, 1.0))
        self.d = d
        self.e_a = e[:p]
        self.e_g = e[p:]
        self.sa = (_diag(self.e_a) @ self.a @ _diag(d)).tocsr()
        self.sg = (_diag(self.e_g) @ self.g @ _diag(d)).tocsr()
        self.sc = d * self.c
        self.sb = self.e_a * self.b
        self.sh = self.e_g * self.h

    def unscale(self, x, y, z, s):
        return self.d * x, self.e_a * y, self.e_g * z, s / self.e_g

    def evaluate(self, x, y, z, s, tau, kappa):
        """Residuals and objectives of the unscaled iterate divided by tau."""
        x, y, z, s = self.unscale(x, y, z, s)
        xh, yh, zh, sh = x / tau, y / tau, z / tau, s / tau
        pres_a = np.linalg.norm(self.a @ xh - self.b) / (1.0 + np.linalg.norm(self.b)) if len(self.b) else 0.0
        pres_g = np.linalg.norm(self.g @ xh + sh - self.h) / (1.0 + np.linalg.norm(self.h)) if len(self.h) else 0.0
        dres = np.linalg.norm(self.a.T @ yh + self.g.T @ zh + self.c) / (1.0 + np.linalg.norm(self.c))
        pcost = float(self.c @ xh)
        dcost = float(-self.b @ yh - self.h @ zh)
        complementarity = float(sh @ zh)
        gap = min(abs(complementarity), abs(pcost - dcost)) / max(1.0, min(abs(pcost), abs(dcost)))
        return {
            "pres": max(pres_a, pres_g),
            "dres": dres,
            "gap": gap,
            "pcost": pcost,
            "dcost": dcost,
            "x": x,
            "y": y,
            "z": z,
            "s": s,
            "xh": xh,
            "yh": yh,
            "zh": zh,
            "sh": sh,
        }


def _expand(form: _StandardForm, x_internal: np.ndarray) -> np.ndarray:
    x = form.x_template.copy()
    x[form.cols] = x_internal
    return x


def _finish(
    form: _StandardForm,
    status: SolveStatus,
    x_internal: np.ndarray,
    y_internal: np.ndarray,
    residuals: ResidualReport,
    iterations: int,
    certificate: Optional[np.ndarray] = None,
    message: str = "",
) -> ConicSolution:
    program = form.program
    x = _expand(form, x_internal)
    y = np.zeros(program.m)
    y[form.rows] = -y_internal
    return ConicSolution(
        status=status,
        x=x,
        y=y,
        dual_cone=program.c - program.a.T @ y,
        objective=program.objective_value(x),
        residuals=residuals,
        iterations=iterations,
        certificate=certificate,
        message=message,
    )


def _initial_point(form: _StandardForm, kkt: KktSystem):
    layout = form.layout
    n, p, m = kkt.n, kkt.p, kkt.m
    kkt.factor(sp.identity(m, format="csc"))
    x, _, zz = kkt.split(kkt.solve(np.concatenate([np.zeros(n), form.sb, form.sh])))
    s = -zz
    _, y, z = kkt.split(kkt.solve(np.concatenate([-form.sc, np.zeros(p), np.zeros(m)])))
    e = layout.identity()
    for v in (s, z):
        if m == 0:
            break
        shift = layout.boundary_shift(v)
        if shift >= -1e-8 * max(np.linalg.norm(v), 1.0):
            v += (1.0 + shift) * e
    return x.copy(), y.copy(), z, s


def solve(program: ConicProgram, settings: SolverSettings = None, log: Optional[TextIO] = None) -> ConicSolution:
    """
    Solve the continuous relaxation of `program` (the integrality mask is ignored).

    Args:
        - program (ConicProgram): the program
        - settings (SolverSettings): tolerances and limits
        - log (TextIO): optional stream receiving one CSV row per iteration

    A factorization that cannot be recovered by raising the regularization
    ends the solve with status NUMERICAL_FAILURE and the best iterate seen.
    """
    settings = settings or SolverSettings()
    form = _StandardForm(program, settings)
    zero_report = ResidualReport(0.0, 0.0, 0.0)

    if form.infeasible_row is not None:
        r = form.infeasible_row
        certificate = np.zeros(program.m)
        certificate[r] = -1.0 / form.infeasible_rhs
        logger.info("presolve: equality row %d has no free variables and is inconsistent", r)
        return ConicSolution(
            status=SolveStatus.INFEASIBLE,
            x=form.x_template.copy(),
            y=np.zeros(program.m),
            dual_cone=program.c.copy(),
            objective=program.objective_value(form.x_template),
            residuals=zero_report,
            certificate=certificate,
            message=f"equality row {r} is inconsistent",
        )
    if form.unbounded_col is not None:
        j = form.unbounded_col
        ray = np.zeros(program.n)
        ray[j] = -1.0 / program.c[j]
        logger.info("presolve: variable %d is unconstrained with nonzero cost", j)
        return ConicSolution(
            status=SolveStatus.UNBOUNDED,
            x=form.x_template.copy(),
            y=np.zeros(program.m),
            dual_cone=program.c.copy(),
            objective=-math.inf,
            residuals=zero_report,
            certificate=ray,
            message=f"variable {j} is unconstrained",
        )
    if len(form.cols) == 0:
        return _finish(form, SolveStatus.OPTIMAL, np.zeros(0), np.zeros(len(form.rows)), zero_report, 0)

    writer = None
    if log is not None:
        writer = csv.writer(log)
        writer.writerow(LOG_FIELDS)

    layout = form.layout
    nu = layout.degree
    e = layout.identity()
    kkt = KktSystem(form.sa, form.sg, settings.regularization, settings.refinement_steps)
    try:
        x, y, z, s = _initial_point(form, kkt)
    except NumericalFailure as exc:
        return _finish(
            form,
            SolveStatus.NUMERICAL_FAILURE,
            np.zeros(len(form.cols)),
            np.zeros(len(form.rows)),
            ResidualReport(math.inf, math.inf, math.inf),
            0,
            message=exc.message,
        )
    tau = kappa = 1.0
    a, g, c, b, h = form.sa, form.sg, form.sc, form.sb, form.sh

    best = None
    status = SolveStatus.ITERATION_LIMIT
    message = ""
    iteration = 0
    for iteration in range(settings.max_iters + 1):
        state = form.evaluate(x, y, z, s, tau, kappa)
        report = ResidualReport(state["pres"], state["dres"], state["gap"])
        merit = max(report.primal / settings.feas_tol, report.dual / settings.feas_tol, report.gap / settings.gap_tol)
        if best is None or merit < best[0]:
            best = (merit, state["xh"], state["yh"], report)

        if settings.debug and tau > 0:
            r_x = form.a.T @ state["yh"] + form.g.T @ state["zh"] + form.c
            r_y = form.b - form.a @ state["xh"]
            r_z = form.h - form.g @ state["xh"] - state["sh"]
            bound = r_x @ state["xh"] + r_y @ state["yh"] + r_z @ state["zh"]
            slack = 1e-6 * max(1.0, abs(state["pcost"]), abs(bound))
            if state["pcost"] - state["dcost"] < bound - slack:
                raise ContractViolation(
                    f"weak duality violated at iteration {iteration}: "
                    f"pcost={state['pcost']:.12g} dcost={state['dcost']:.12g}"
                )

        if report.within(settings.feas_tol, settings.gap_tol):
            status = SolveStatus.OPTIMAL
            break

        x_u, y_u, z_u, s_u = state["x"], state["y"], state["z"], state["s"]
        dual_obj = float(form.b @ y_u + form.h @ z_u)
        if dual_obj < 0:
            res = np.linalg.norm(form.a.T @ y_u + form.g.T @ z_u) / -dual_obj
            if res <= settings.feas_tol and layout.contains(z_u, settings.feas_tol):
                status = SolveStatus.INFEASIBLE
                certificate = np.zeros(program.m)
                certificate[form.rows] = y_u / -dual_obj
                logger.info("solve: primal infeasible after %d iterations", iteration)
                return _finish(
                    form, status, state["xh"], state["yh"], report, iteration, certificate=certificate
                )
        primal_obj = float(form.c @ x_u)
        if primal_obj < 0:
            res = max(
                np.linalg.norm(form.a @ x_u) if len(form.b) else 0.0,
                np.linalg.norm(form.g @ x_u + s_u) if len(form.h) else 0.0,
            ) / -primal_obj
            if res <= settings.feas_tol:
                logger.info("solve: unbounded after %d iterations", iteration)
                ray = _expand(form, x_u / -primal_obj) - form.x_template
                return _finish(form, SolveStatus.UNBOUNDED, state["xh"], state["yh"], report, iteration, certificate=ray)

        if iteration == settings.max_iters:
            break

        mu = (s @ z + tau * kappa) / (nu + 1)
        r_x = a.T @ y + g.T @ z + c * tau
        r_y = b * tau - a @ x
        r_z = h * tau - g @ x - s
        r_t = -(c @ x) - b @ y - h @ z - kappa

        try:
            scaling = layout.nt_scaling(s, z)
            lam = scaling.lam
            kkt.factor(scaling.squared())
            x1, y1, z1 = kkt.split(kkt.solve(np.concatenate([-c, b, h])))
            denom = kappa / tau - c @ x1 - b @ y1 - h @ z1

            def direction(keep: float, d_s: np.ndarray, d_k: float):
                u = kkt.solve(np.concatenate([-keep * r_x, keep * r_y, keep * r_z - scaling.apply(layout.inverse_product(lam, d_s))]))
                x0, y0, z0 = kkt.split(u)
                dtau = (-keep * r_t + d_k / tau + c @ x0 + b @ y0 + h @ z0) / denom
                dx, dy, dz = x0 + dtau * x1, y0 + dtau * y1, z0 + dtau * z1
                ds = scaling.apply(layout.inverse_product(lam, d_s) - scaling.apply(dz))
                dkappa = (d_k - kappa * dtau) / tau
                return dx, dy, dz, ds, dtau, dkappa

            def step(dz, ds, dtau, dkappa) -> float:
                alpha = min(layout.max_step(s, ds), layout.max_step(z, dz))
                if dtau < 0:
                    alpha = min(alpha, -tau / dtau)
                if dkappa < 0:
                    alpha = min(alpha, -kappa / dkappa)
                return alpha

            lam_sq = layout.product(lam, lam)
            aff = direction(1.0, -lam_sq, -tau * kappa)
            alpha_aff = min(1.0, step(aff[2], aff[3], aff[4], aff[5]))
            sigma = min(1.0, max(0.0, (1.0 - alpha_aff) ** 3))
            dz_t = scaling.apply(aff[2])
            ds_t = scaling.apply_inverse(aff[3])
            d_s = -lam_sq - layout.product(ds_t, dz_t) + sigma * mu * e
            d_k = -tau * kappa - aff[4] * aff[5] + sigma * mu
            dx, dy, dz, ds, dtau, dkappa = direction(1.0 - sigma, d_s, d_k)
            alpha = min(1.0, settings.step_fraction * step(dz, ds, dtau, dkappa))
        except NumericalFailure as exc:
            status = SolveStatus.NUMERICAL_FAILURE
            message = exc.message
            break
        if not all(np.all(np.isfinite(v)) for v in (dx, dy, dz, ds)) or not math.isfinite(dtau + dkappa):
            status = SolveStatus.NUMERICAL_FAILURE
            message = "non-finite search direction"
            break

        if writer is not None:
            writer.writerow(
                [iteration, f"{mu:.6e}", f"{report.primal:.6e}", f"{report.dual:.6e}", f"{report.gap:.6e}",
                 f"{state['pcost']:.10e}", f"{state['dcost']:.10e}", f"{sigma:.4f}", f"{alpha_aff:.4f}", f"{alpha:.4f}"]
            )
        logger.debug(
            "iter %3d mu=%.3e pres=%.2e dres=%.2e gap=%.2e alpha=%.3f",
            iteration, mu, report.primal, report.dual, report.gap, alpha,
        )
        if alpha < 1e-10:
            status = SolveStatus.NUMERICAL_FAILURE
            message = "step size collapsed"
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau += alpha * dtau
        kappa += alpha * dkappa

    if status == SolveStatus.OPTIMAL:
        logger.debug("solve: optimal after %d iterations, objective %.10g", iteration, state["pcost"] + form.constant)
        return _finish(form, status, state["xh"], state["yh"], report, iteration)
    _, xh, yh, report = best
    logger.info("solve: %s after %d iterations (%s), best residuals %s", status.value, iteration, message, report)
    return _finish(form, status, xh, yh, report, iteration, message=message)


def solve_with_fixings(
    program: ConicProgram,
    fixings: Mapping[int, float],
    settings: SolverSettings = None,
    log: Optional[TextIO] = None,
) -> ConicSolution:
    """
    Solve with the integer variables in `fixings` collapsed to 0 or 1.

    Raises PreconditionError when a fixed position is not an integer variable
    or the value is not 0/1.
    """
    for pos, value in fixings.items():
        if not (0 <= pos < program.n) or not program.integer[pos]:
            raise PreconditionError(f"variable {pos} is not in the integrality mask")
        if value not in (0, 1):
            raise PreconditionError(f"variable {pos} can only be fixed to 0 or 1, got {value}")
    return solve(program.with_fixings(fixings), settings, log)
