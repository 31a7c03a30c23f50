"""
Reader and writer for the MATPOWER-style text matrix case format.

Supported statements (anything else, e.g. `mpc.gencost`, is skipped):

    mpc.baseMVA = 100;
    mpc.bus = [ bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin ; ... ];
    mpc.gen = [ bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin ... ; ... ];
    mpc.branch = [ fbus tbus r x b rateA rateB rateC ratio angle status ... ; ... ];

Powers are in MW/MVar and converted to per-unit on baseMVA. A `ratio` of 0
means a plain line (tau = 1); `angle` is in degrees. `rateA = 0` means the
branch is unlimited. Rows with status 0 are dropped, and so are isolated
(type 4) buses with everything attached to them. `%` starts a comment.
"""

import logging
import math
import re
from importlib import resources
from pathlib import Path
from typing import Optional, Union

import httpx
import pandas as pd

from .exceptions import CaseFetchError, CaseParseError, CaseValidationError, ScenarioError
from .network import Branch, Bus, Generator, Load, NetworkCase, ScenarioSet, build_scenarios
from .settings import DEFAULT_BASE_MVA, IEEE30_CASE

logger = logging.getLogger(__name__)

BUS_COLUMNS = 13
GEN_COLUMNS = 10
BRANCH_COLUMNS = 11
ISOLATED_BUS = 4

_ASSIGN = re.compile(r"^\s*mpc\.(\w+)\s*=\s*(.*)$")


def _strip_comment(line: str) -> str:
    return line.split("%", 1)[0]


def _parse_number(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise CaseParseError(f"not a number: {token!r}", line)


def _read_tables(text: str) -> tuple[Optional[float], dict[str, list[tuple[int, list[float]]]]]:
    base_mva = None
    tables: dict[str, list[tuple[int, list[float]]]] = {}
    current = None
    pending: list[str] = []
    pending_line = 0

    def flush_row(line: int):
        nonlocal pending
        if pending:
            tables[current].append((pending_line, [_parse_number(t, line) for t in pending]))
            pending = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if current is None:
            match = _ASSIGN.match(line)
            if not match:
                continue
            name, rest = match.group(1), match.group(2).strip()
            if name == "baseMVA":
                value = rest.rstrip(";").strip()
                base_mva = _parse_number(value, lineno)
                continue
            if not rest.startswith("["):
                continue
            if name in tables:
                raise CaseParseError(f"table mpc.{name} defined twice", lineno)
            current = name
            tables[current] = []
            line = rest[1:]
        # inside a matrix literal
        closed = "]" in line
        if closed:
            line, tail = line.split("]", 1)
            if tail.strip().rstrip(";").strip():
                raise CaseParseError(f"unexpected text after ']': {tail.strip()!r}", lineno)
        for piece_no, piece in enumerate(line.split(";")):
            if piece_no > 0:
                flush_row(lineno)
            tokens = piece.replace(",", " ").split()
            if tokens and not pending:
                pending_line = lineno
            pending.extend(tokens)
        if not closed:
            # a newline also ends a row
            flush_row(lineno)
        else:
            flush_row(lineno)
            current = None
    if current is not None:
        raise CaseParseError(f"unterminated matrix mpc.{current}", len(text.splitlines()))
    return base_mva, tables


def _check_width(table: str, rows: list[tuple[int, list[float]]], width: int):
    for line, row in rows:
        if len(row) < width:
            raise CaseParseError(f"mpc.{table} row has {len(row)} columns, expected at least {width}", line)


def parse_case(text: str) -> NetworkCase:
    """
    Parse case file content into a validated per-unit NetworkCase.

    Raises CaseParseError (with line number) for malformed text and
    CaseValidationError for data that violates a model invariant.
    """
    base_mva, tables = _read_tables(text)
    if base_mva is None:
        logger.warning("no mpc.baseMVA statement, assuming %s MVA", DEFAULT_BASE_MVA)
        base_mva = DEFAULT_BASE_MVA
    for required in ("bus", "gen", "branch"):
        if required not in tables:
            raise CaseParseError(f"missing table mpc.{required}", len(text.splitlines()))
    _check_width("bus", tables["bus"], BUS_COLUMNS)
    _check_width("gen", tables["gen"], GEN_COLUMNS)
    _check_width("branch", tables["branch"], BRANCH_COLUMNS)

    buses, loads, isolated = [], [], set()
    for line, row in tables["bus"]:
        bus_id = int(row[0])
        if int(row[1]) == ISOLATED_BUS:
            isolated.add(bus_id)
            continue
        if row[4] != 0:
            logger.warning("bus %d: shunt conductance Gs=%s is ignored", bus_id, row[4])
        try:
            buses.append(Bus(id=bus_id, v_min=row[12], v_max=row[11], shunt_b=row[5] / base_mva))
        except CaseValidationError as exc:
            raise CaseValidationError(f"line {line}: {exc.message}")
        loads.append(Load(bus=bus_id, p_base=row[2] / base_mva, q_base=row[3] / base_mva))

    generators = []
    for line, row in tables["gen"]:
        if row[7] <= 0 or int(row[0]) in isolated:
            continue
        try:
            generators.append(
                Generator(
                    bus=int(row[0]),
                    p_min=row[9] / base_mva,
                    p_max=row[8] / base_mva,
                    q_min=row[4] / base_mva,
                    q_max=row[3] / base_mva,
                )
            )
        except CaseValidationError as exc:
            raise CaseValidationError(f"line {line}: {exc.message}")

    branches = []
    for line, row in tables["branch"]:
        if row[10] <= 0 or int(row[0]) in isolated or int(row[1]) in isolated:
            continue
        ratio = row[8] if row[8] != 0 else 1.0
        rate = row[5] / base_mva if row[5] > 0 else math.inf
        try:
            branches.append(
                Branch(
                    from_bus=int(row[0]),
                    to_bus=int(row[1]),
                    r=row[2],
                    x=row[3],
                    b_ch=row[4],
                    tau=ratio,
                    theta_ps=math.radians(row[9]),
                    s_max=rate,
                )
            )
        except CaseValidationError as exc:
            raise CaseValidationError(f"line {line}: {exc.message}")

    if isolated:
        logger.info("dropped isolated bus(es) %s with their branches and generators", sorted(isolated))
    case = NetworkCase(
        base_mva=base_mva,
        buses=tuple(buses),
        branches=tuple(branches),
        generators=tuple(generators),
        loads=tuple(loads),
    )
    logger.debug("parsed %s", case)
    return case


def _fmt(value: float) -> str:
    # file values carry few decimals; rounding undoes the per-unit division noise
    value = round(value, 9)
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def serialize_case(case: NetworkCase) -> str:
    """Write a NetworkCase back in the dialect read by `parse_case`."""
    base = case.base_mva
    p_d = {bus.id: 0.0 for bus in case.buses}
    q_d = {bus.id: 0.0 for bus in case.buses}
    for load in case.loads:
        p_d[load.bus] += load.p_base
        q_d[load.bus] += load.q_base
    gen_buses = case.generator_buses
    slack = max(case.generators, key=lambda g: g.p_max).bus if case.generators else None

    lines = ["function mpc = case", "mpc.version = '2';", f"mpc.baseMVA = {_fmt(base)};", ""]
    lines.append("%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin")
    lines.append("mpc.bus = [")
    for bus in case.buses:
        kind = 3 if bus.id == slack else 2 if bus.id in gen_buses else 1
        cols = [bus.id, kind, p_d[bus.id] * base, q_d[bus.id] * base, 0, bus.shunt_b * base,
                1, 1, 0, 0, 1, bus.v_max, bus.v_min]
        lines.append("\t" + "\t".join(_fmt(c) for c in cols) + ";")
    lines.append("];")
    lines.append("")
    lines.append("%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin")
    lines.append("mpc.gen = [")
    for gen in case.generators:
        cols = [gen.bus, 0, 0, gen.q_max * base, gen.q_min * base, 1, base, 1, gen.p_max * base, gen.p_min * base]
        lines.append("\t" + "\t".join(_fmt(c) for c in cols) + ";")
    lines.append("];")
    lines.append("")
    lines.append("%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax")
    lines.append("mpc.branch = [")
    for br in case.branches:
        rate = br.s_max * base if br.is_limited else 0
        ratio = br.tau if br.is_transformer else 0
        cols = [br.from_bus, br.to_bus, br.r, br.x, br.b_ch, rate, rate, rate, ratio,
                math.degrees(br.theta_ps), 1, -360, 360]
        lines.append("\t" + "\t".join(_fmt(c) for c in cols) + ";")
    lines.append("];")
    return "\n".join(lines) + "\n"


def _is_url(source: str) -> bool:
    return source.startswith("http://") or source.startswith("https://")


def load_case(source: Union[str, Path], client: Optional[httpx.Client] = None) -> NetworkCase:
    """
    Load a case from a local path or an http(s) URL.

    Args:
        - source (str | Path): file path or URL of the case file
        - client (httpx.Client): optional client used for URLs

    Example usage:
    ```
    from svcplan import load_case

    case = load_case("case_ieee30.m")
    ```
    """
    source = str(source)
    if not _is_url(source):
        return parse_case(Path(source).read_text())

    owns_client = client is None
    client = client or httpx.Client()
    try:
        response = client.get(source)
        try:
            response.raise_for_status()
        except httpx.HTTPStatusError as exc:
            raise CaseFetchError(f"fetching {source} failed: {exc.response.status_code} {exc.response.text}")
    except httpx.HTTPError as exc:
        raise CaseFetchError(f"fetching {source} failed: {exc}")
    finally:
        if owns_client:
            client.close()
    logger.info("fetched case from %s (%d bytes)", source, len(response.content))
    return parse_case(response.text)


def ieee30_case() -> NetworkCase:
    """The bundled IEEE 30-bus instance."""
    text = resources.files("svcplan.data").joinpath(IEEE30_CASE).read_text()
    return parse_case(text)


def load_scenarios(path: Union[str, Path]) -> ScenarioSet:
    """Read a scenario CSV with header `rho,lambda`, one row per scenario."""
    frame = pd.read_csv(path)
    frame.columns = [c.strip() for c in frame.columns]
    missing = {"rho", "lambda"} - set(frame.columns)
    if missing:
        raise ScenarioError(f"{path}: missing column(s) {', '.join(sorted(missing))}")
    return build_scenarios(zip(frame["rho"].astype(float), frame["lambda"].astype(float)))


def write_scenarios(scenarios: ScenarioSet, path: Union[str, Path]) -> None:
    frame = pd.DataFrame(scenarios.to_rows(), columns=["rho", "lambda"])
    frame.to_csv(path, index=False)
