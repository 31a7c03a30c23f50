"""Line-flow-based power flow constraints over squared voltages W = V^2."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .exceptions import AssemblyError
from .model_index import PG, PL, PL_AUX, PR, QG, QL, QL_AUX, QR, QV, W, MicpIndex
from .network import NetworkCase, Scenario, bus_demand, bus_susceptance, scale_loads
from .program import Affine, ConeKind, ConeRow, LinearRow
from .settings import DEFAULT_EPS_THETA, DEFAULT_HALF_CHARGING

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FlowIncidence:
    m_f: sp.csr_matrix
    m_l: sp.csr_matrix


@dataclass(frozen=True, eq=False)
class CycleBasis:
    c_l: sp.csr_matrix

    @property
    def n_loops(self) -> int:
        return self.c_l.shape[0]


def build_incidence(case: NetworkCase) -> FlowIncidence:
    """
    M_f(i, k) is +1 at the sending bus of branch k and -1 at its receiving
    bus; M_l(i, k) is 1 at the sending bus only.
    """
    n_bus, n_br = len(case.buses), len(case.branches)
    frm = np.array([case.bus_position(br.from_bus) for br in case.branches], dtype=int)
    to = np.array([case.bus_position(br.to_bus) for br in case.branches], dtype=int)
    cols = np.arange(n_br)
    m_f = sp.csr_matrix(
        (np.concatenate([np.ones(n_br), -np.ones(n_br)]), (np.concatenate([frm, to]), np.concatenate([cols, cols]))),
        shape=(n_bus, n_br),
    )
    m_l = sp.csr_matrix((np.ones(n_br), (frm, cols)), shape=(n_bus, n_br))
    return FlowIncidence(m_f=m_f, m_l=m_l)


def build_cycle_basis(case: NetworkCase, root: Optional[int] = None) -> CycleBasis:
    """
    Fundamental cycle basis over a BFS spanning tree.

    Each branch outside the tree (a chord) closes one loop, oriented along the
    chord. Parallel branches are chords of their own two-branch loop.
    """
    graph = case.graph()
    root = case.buses[0].id if root is None else root
    parent = dict(nx.bfs_predecessors(graph, root))
    depth = {root: 0}
    for node in nx.bfs_tree(graph, root):
        if node != root:
            depth[node] = depth[parent[node]] + 1

    tree_branch: dict[int, int] = {}  # child bus -> branch ordinal to parent
    for k, br in enumerate(case.branches):
        for child, other in ((br.from_bus, br.to_bus), (br.to_bus, br.from_bus)):
            if parent.get(child) == other and child not in tree_branch:
                tree_branch[child] = k
                break
    in_tree = set(tree_branch.values())

    def step_sign(k: int, walk_from: int) -> float:
        return 1.0 if case.branches[k].from_bus == walk_from else -1.0

    rows, cols, vals = [], [], []
    loop = 0
    for k, br in enumerate(case.branches):
        if k in in_tree:
            continue
        members = {k: 1.0}
        # walk from the chord's receiving bus back to its sending bus through the tree
        u, v = br.to_bus, br.from_bus
        up_u, up_v = [], []
        while depth[u] > depth[v]:
            up_u.append(u)
            u = parent[u]
        while depth[v] > depth[u]:
            up_v.append(v)
            v = parent[v]
        while u != v:
            up_u.append(u)
            up_v.append(v)
            u, v = parent[u], parent[v]
        for node in up_u:
            kb = tree_branch[node]
            members[kb] = members.get(kb, 0.0) + step_sign(kb, node)
        for node in up_v:
            kb = tree_branch[node]
            members[kb] = members.get(kb, 0.0) + step_sign(kb, parent[node])
        for kb, sign in sorted(members.items()):
            if sign != 0.0:
                rows.append(loop)
                cols.append(kb)
                vals.append(sign)
        loop += 1
    c_l = sp.csr_matrix((vals, (rows, cols)), shape=(loop, len(case.branches)))
    return CycleBasis(c_l=c_l)


@dataclass
class LfbBlock:
    """Constraint records of one scenario, grouped by kind."""

    scenario: int
    real_balance: list[LinearRow] = field(default_factory=list)
    reactive_balance: list[LinearRow] = field(default_factory=list)
    voltage_drop: list[LinearRow] = field(default_factory=list)
    loop_angle: list[LinearRow] = field(default_factory=list)
    loss_coupling: list[LinearRow] = field(default_factory=list)
    loss_cones: list[ConeRow] = field(default_factory=list)
    thermal_cones: list[ConeRow] = field(default_factory=list)

    def linear_rows(self, include_reactive: bool = True) -> list[LinearRow]:
        rows = list(self.real_balance)
        if include_reactive:
            rows += self.reactive_balance
        return rows + self.voltage_drop + self.loop_angle + self.loss_coupling

    def cone_rows(self) -> list[ConeRow]:
        return self.loss_cones + self.thermal_cones

    def describe(self, names=None) -> str:
        lines = [f"# scenario {self.scenario + 1}"]
        lines.extend(row.describe(names) for row in self.linear_rows())
        lines.extend(row.describe(names) for row in self.cone_rows())
        return "\n".join(lines) + "\n"

    def dump(self, directory: Union[str, Path], names=None) -> Path:
        path = Path(directory) / f"lfb_s{self.scenario + 1}.txt"
        path.write_text(self.describe(names))
        return path


def _generator_terms(case: NetworkCase, index: MicpIndex, name: str, s: int) -> dict[int, dict[int, float]]:
    terms: dict[int, dict[int, float]] = {pos: {} for pos in range(len(case.buses))}
    for g, gen in enumerate(case.generators):
        terms[case.bus_position(gen.bus)][index.position(name, g, s)] = 1.0
    return terms


def reactive_balance_rows(
    case: NetworkCase, scenario: Scenario, s: int, index: MicpIndex, with_svc: bool
) -> list[LinearRow]:
    """
    sum Qg - Qd + B_i W_i [+ Qv_i] = sum_k M_f(i,k) Qr_k + sum_k M_l(i,k) Ql_k
    """
    _, q_d = bus_demand(case, scale_loads(case, scenario))
    b_fixed = bus_susceptance(case)
    terms = _generator_terms(case, index, QG, s)
    for k, br in enumerate(case.branches):
        fi, ti = case.bus_position(br.from_bus), case.bus_position(br.to_bus)
        qr, ql = index.position(QR, k, s), index.position(QL, k, s)
        terms[fi][qr] = terms[fi].get(qr, 0.0) - 1.0
        terms[fi][ql] = terms[fi].get(ql, 0.0) - 1.0
        terms[ti][qr] = terms[ti].get(qr, 0.0) + 1.0
    rows = []
    candidates = set(index.candidates)
    for pos, bus in enumerate(case.buses):
        terms[pos][index.position(W, bus.id, s)] = b_fixed[pos]
        if with_svc and bus.id in candidates:
            terms[pos][index.position(QV, bus.id, s)] = 1.0
        rows.append(LinearRow.equal("reactive_balance", terms[pos], q_d[pos], f"bus {bus.id}"))
    return rows


def assemble_lfb(
    case: NetworkCase,
    scenario: Scenario,
    index: MicpIndex,
    s: int = 0,
    eps_theta: float = DEFAULT_EPS_THETA,
    half_charging: bool = DEFAULT_HALF_CHARGING,
    cycle_basis: Optional[CycleBasis] = None,
) -> LfbBlock:
    """
    Emit the line-flow constraints of scenario `s`.

    Args:
        - case (NetworkCase): the network
        - scenario (Scenario): load level of this block
        - index (MicpIndex): variable positions
        - s (int): scenario ordinal in the index
        - eps_theta (float): loop angle tolerance in radians
        - half_charging (bool): use b_ch/2 as the charging term of the thermal cones
        - cycle_basis (CycleBasis): reuse a precomputed basis
    """
    for k, br in enumerate(case.branches):
        if not br.x > 0:
            raise AssemblyError(f"branch {k} ({br.from_bus}-{br.to_bus}) has x <= 0")
    if eps_theta < 0:
        raise AssemblyError(f"eps_theta must be >= 0, got {eps_theta}")
    block = LfbBlock(scenario=s)
    p_d, _ = bus_demand(case, scale_loads(case, scenario))

    # real balance: sum Pg - Pd = sum_k M_f(i,k) Pr_k + sum_k M_l(i,k) Pl_k
    terms = _generator_terms(case, index, PG, s)
    for k, br in enumerate(case.branches):
        fi, ti = case.bus_position(br.from_bus), case.bus_position(br.to_bus)
        pr, pl = index.position(PR, k, s), index.position(PL, k, s)
        terms[fi][pr] = terms[fi].get(pr, 0.0) - 1.0
        terms[fi][pl] = terms[fi].get(pl, 0.0) - 1.0
        terms[ti][pr] = terms[ti].get(pr, 0.0) + 1.0
    for pos, bus in enumerate(case.buses):
        block.real_balance.append(LinearRow.equal("real_balance", terms[pos], p_d[pos], f"bus {bus.id}"))
    block.reactive_balance = reactive_balance_rows(case, scenario, s, index, with_svc=False)

    for k, br in enumerate(case.branches):
        label = f"branch {k} ({br.from_bus}-{br.to_bus})"
        wi, wj = index.position(W, br.from_bus, s), index.position(W, br.to_bus, s)
        pr, qr = index.position(PR, k, s), index.position(QR, k, s)
        pl, ql = index.position(PL, k, s), index.position(QL, k, s)
        aux = index.position(PL_AUX, k, s)

        # W_i/tau^2 - W_j = 2r Pr + 2x Qr + r Pl + x Ql
        block.voltage_drop.append(
            LinearRow.equal(
                "voltage_drop",
                {wi: 1.0 / br.tau**2, wj: -1.0, pr: -2 * br.r, qr: -2 * br.x, pl: -br.r, ql: -br.x},
                0.0,
                label,
            )
        )

        if br.r > 0:
            block.loss_coupling.append(LinearRow.equal("loss_coupling", {pl: br.x, ql: -br.r}, 0.0, label))
            block.loss_coupling.append(LinearRow.equal("loss_coupling", {pl: 1.0, aux: -2 * br.r}, 0.0, label))
            cone_aux = aux
        else:
            # lossless in P; reactive loss x|I|^2 through its own cone
            cone_aux = index.position(QL_AUX, k, s)
            block.loss_coupling.append(LinearRow.equal("loss_coupling", {pl: 1.0}, 0.0, label))
            block.loss_coupling.append(LinearRow.equal("loss_coupling", {aux: 1.0}, 0.0, label))
            block.loss_coupling.append(LinearRow.equal("loss_coupling", {ql: 1.0, cone_aux: -2 * br.x}, 0.0, label))

        # 2 aux W_j >= Pr^2 + Qr^2
        block.loss_cones.append(
            ConeRow(
                "loss_cone",
                ConeKind.RSOC,
                (Affine.of({cone_aux: 1.0}), Affine.of({wj: 1.0}), Affine.of({pr: 1.0}), Affine.of({qr: 1.0})),
                label,
            )
        )

        if br.is_limited:
            b = br.b_ch / 2.0 if half_charging else br.b_ch
            block.thermal_cones.append(
                ConeRow(
                    "thermal_to",
                    ConeKind.SOC,
                    (Affine.of(constant=br.s_max), Affine.of({pr: 1.0}), Affine.of({qr: 1.0, wj: b})),
                    label,
                )
            )
            block.thermal_cones.append(
                ConeRow(
                    "thermal_from",
                    ConeKind.SOC,
                    (
                        Affine.of(constant=br.s_max),
                        Affine.of({pr: 1.0, pl: 1.0}),
                        Affine.of({qr: 1.0, ql: 1.0, wi: -b}),
                    ),
                    label,
                )
            )

    basis = cycle_basis if cycle_basis is not None else build_cycle_basis(case)
    c_l = basis.c_l.tocsr()
    for c in range(basis.n_loops):
        lo, hi = c_l.indptr[c], c_l.indptr[c + 1]
        loop_terms: dict[int, float] = {}
        shift = 0.0
        for k, sign in zip(c_l.indices[lo:hi], c_l.data[lo:hi]):
            br = case.branches[k]
            loop_terms[index.position(PR, int(k), s)] = sign * br.tau * br.x
            loop_terms[index.position(QR, int(k), s)] = -sign * br.tau * br.r
            shift += sign * br.theta_ps
        block.loop_angle.append(
            LinearRow.between("loop_angle", loop_terms, -eps_theta - shift, eps_theta - shift, f"loop {c}")
        )
    return block


def loop_residuals(case: NetworkCase, basis: CycleBasis, p_r: np.ndarray, q_r: np.ndarray) -> np.ndarray:
    """Left side of the loop angle constraint per loop."""
    tau = np.array([br.tau for br in case.branches])
    r = np.array([br.r for br in case.branches])
    x = np.array([br.x for br in case.branches])
    shift = np.array([br.theta_ps for br in case.branches])
    return basis.c_l @ (tau * (p_r * x - q_r * r) + shift)
