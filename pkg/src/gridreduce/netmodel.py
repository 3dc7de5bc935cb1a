"""
Network data model and a reader/writer for MATPOWER-style case files.

Only the bus, generator, branch and baseMVA tables are read. Per-unit
conversion happens once at parse time; everything downstream works in
per unit on ``Network.base_mva``.
"""

from __future__ import annotations

import enum
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field
from functools import cached_property

import networkx as nx
import numpy as np

from gridreduce.errors import Disconnected, MalformedCase, NoSlack


class BusKind(enum.IntEnum):
    # values follow the case-file type column
    PQ = 1
    PV = 2
    SLACK = 3


@dataclass(frozen=True)
class Bus:
    id: int
    kind: BusKind
    p_inj: float
    q_inj: float
    v_mag_setpoint: float = 1.0
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    series_g: float
    series_b: float
    shunt_g: float = 0.0
    shunt_b: float = 0.0
    tap_ratio: float = 1.0
    phase_shift: float = 0.0
    reactance: float = 0.0
    resistance: float = 0.0

    @classmethod
    def from_impedance(cls, from_bus, to_bus, r, x, charging=0.0, tap=1.0, shift=0.0):
        y = 1.0 / complex(r, x)
        return cls(int(from_bus), int(to_bus), y.real, y.imag, 0.0, charging,
                   tap, shift, x, r)


@dataclass(frozen=True)
class Network:
    base_mva: float
    buses: tuple
    branches: tuple
    ref_bus: int

    def __post_init__(self):
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "branches", tuple(self.branches))

    @cached_property
    def bus_index(self) -> dict:
        """Map bus id -> position in ``buses``."""
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return len(self.branches)

    @cached_property
    def bus_ids(self) -> np.ndarray:
        return np.array([b.id for b in self.buses], dtype=int)

    @cached_property
    def p_inj(self) -> np.ndarray:
        return np.array([b.p_inj for b in self.buses])

    @cached_property
    def q_inj(self) -> np.ndarray:
        return np.array([b.q_inj for b in self.buses])

    @cached_property
    def kinds(self) -> np.ndarray:
        return np.array([int(b.kind) for b in self.buses], dtype=int)

    def graph(self) -> nx.MultiGraph:
        g = nx.MultiGraph()
        g.add_nodes_from(b.id for b in self.buses)
        for k, br in enumerate(self.branches):
            g.add_edge(br.from_bus, br.to_bus, key=k)
        return g


@dataclass(frozen=True)
class ACSolution:
    v_mag: np.ndarray
    v_ang: np.ndarray
    p_flow_from: np.ndarray
    q_flow_from: np.ndarray
    converged: bool
    iterations: int
    max_mismatch: float
    p_flow_to: np.ndarray = field(default=None, repr=False)
    q_flow_to: np.ndarray = field(default=None, repr=False)


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.rule} ({self.subject}): {self.message}"


# ---------------------------------------------------------------------------
# parsing

_TABLE_RE = r"\.{name}\s*=\s*\[(.*?)\]"
_MIN_COLS = {"bus": 9, "gen": 8, "branch": 11}


def _strip_comments(text):
    return "\n".join(line.split("%", 1)[0] for line in text.splitlines())


def _read_table(text, name):
    m = re.search(_TABLE_RE.format(name=name), text, re.S)
    if m is None:
        raise MalformedCase(f"missing '{name}' table")
    rows = []
    for k, chunk in enumerate(re.split(r"[;\n]", m.group(1))):
        tokens = chunk.replace(",", " ").split()
        if not tokens:
            continue
        try:
            row = [float(t) for t in tokens]
        except ValueError:
            raise MalformedCase(f"non-numeric field in '{name}' table: {chunk.strip()!r}") from None
        if len(row) < _MIN_COLS[name]:
            raise MalformedCase(
                f"'{name}' row has {len(row)} columns, need at least {_MIN_COLS[name]}: {chunk.strip()!r}"
            )
        rows.append(row)
    return rows


def parse_case(text: str) -> Network:
    """Parse MATPOWER case text into a per-unit :class:`Network`.

    Out-of-service branches and generators, and isolated (type 4) buses,
    are dropped. Several generators at one bus are summed.

    Raises
    ------
    MalformedCase
        Missing table, non-numeric field, or any validation failure
        other than those below.
    NoSlack
        No bus is flagged as the reference.
    Disconnected
        The in-service branch graph does not span every bus.
    """
    text = _strip_comments(text)
    m = re.search(r"\.baseMVA\s*=\s*([^;\s]+)", text)
    if m is None:
        raise MalformedCase("missing baseMVA")
    try:
        base = float(m.group(1))
    except ValueError:
        raise MalformedCase(f"non-numeric baseMVA {m.group(1)!r}") from None
    if not base > 0:
        raise MalformedCase("baseMVA must be positive")

    bus_rows = _read_table(text, "bus")
    gen_rows = _read_table(text, "gen")
    branch_rows = _read_table(text, "branch")

    isolated = {int(r[0]) for r in bus_rows if int(r[1]) == 4}
    bus_rows = [r for r in bus_rows if int(r[1]) != 4]
    present = {int(r[0]) for r in bus_rows}

    pg, qg, vg = {}, {}, {}
    for r in gen_rows:
        bus = int(r[0])
        if r[7] <= 0 or bus not in present:
            continue
        pg.setdefault(bus, []).append(r[1])
        qg.setdefault(bus, []).append(r[2])
        vg.setdefault(bus, r[5])

    buses = []
    slack = []
    for r in bus_rows:
        bid, kind = int(r[0]), int(r[1])
        if kind not in (1, 2, 3):
            raise MalformedCase(f"bus {bid}: unknown bus type {kind}")
        if kind == 2 and bid not in pg:
            # PV bus without an in-service generator holds no voltage
            kind = 1
        if kind == 3:
            slack.append(bid)
        p = (math.fsum(pg.get(bid, ())) - r[2]) / base
        q = (math.fsum(qg.get(bid, ())) - r[3]) / base
        vset = vg[bid] if kind in (2, 3) and bid in vg else r[7]
        buses.append(Bus(bid, BusKind(kind), p, q, vset, r[4] / base, r[5] / base))
    if not slack:
        raise NoSlack("no bus is flagged as the reference (type 3)")

    branches = []
    for r in branch_rows:
        # unknown endpoints are kept so validation can name them
        if r[10] <= 0 or int(r[0]) in isolated or int(r[1]) in isolated:
            continue
        branches.append(_branch_from_row(r))

    net = Network(base, buses, branches, slack[0])
    problems = validate(net)
    if problems:
        rules = {v.rule for v in problems}
        if rules == {"Disconnected"}:
            raise Disconnected(str(problems[0]))
        raise MalformedCase("; ".join(str(v) for v in problems))
    return net


def _branch_from_row(r):
    r_, x = r[2], r[3]
    if r_ == 0 and x == 0:
        raise MalformedCase(f"branch {int(r[0])}-{int(r[1])} has zero impedance")
    tap = r[8] if r[8] != 0 else 1.0
    return Branch.from_impedance(r[0], r[1], r_, x, r[4], tap, math.radians(r[9]))


# ---------------------------------------------------------------------------
# validation

def validate(net: Network) -> list:
    """Return a list of :class:`Violation`; empty iff the network is valid."""
    out = []
    seen = set()
    for b in net.buses:
        if b.id in seen:
            out.append(Violation("DuplicateBusId", f"bus {b.id}", "bus id is not unique"))
        seen.add(b.id)
    slacks = [b for b in net.buses if b.kind == BusKind.SLACK]
    if not slacks:
        out.append(Violation("NoSlack", "network", "no slack bus"))
    elif len(slacks) > 1:
        ids = ", ".join(str(b.id) for b in slacks)
        out.append(Violation("DuplicateSlack", f"buses {ids}", "more than one slack bus"))
    if slacks and net.ref_bus not in {b.id for b in slacks}:
        out.append(Violation("RefBusMismatch", f"bus {net.ref_bus}", "ref_bus is not a slack bus"))
    for b in net.buses:
        if b.kind in (BusKind.SLACK, BusKind.PV) and not b.v_mag_setpoint > 0:
            out.append(Violation("NonPositiveSetpoint", f"bus {b.id}",
                                 f"voltage setpoint {b.v_mag_setpoint} must be > 0"))
    dangling = False
    for k, br in enumerate(net.branches):
        subject = f"branch {k} ({br.from_bus}-{br.to_bus})"
        if br.from_bus not in seen or br.to_bus not in seen:
            missing = [i for i in (br.from_bus, br.to_bus) if i not in seen]
            out.append(Violation("DanglingBranch", subject, f"unknown bus {missing[0]}"))
            dangling = True
        if br.from_bus == br.to_bus:
            out.append(Violation("SelfLoop", subject, "from_bus equals to_bus"))
        if br.series_g == 0 and br.series_b == 0:
            out.append(Violation("ZeroAdmittance", subject, "series admittance is zero"))
        if not br.tap_ratio > 0:
            out.append(Violation("NonPositiveTap", subject, f"tap ratio {br.tap_ratio} must be > 0"))
    if not dangling and net.buses and not nx.is_connected(net.graph()):
        n = nx.number_connected_components(net.graph())
        out.append(Violation("Disconnected", "network", f"branch graph has {n} components"))
    return out


# ---------------------------------------------------------------------------
# writing

def _preimage(value, forward, guess):
    """Float ``y`` near ``guess`` with ``forward(y) == value`` exactly."""
    lo = hi = guess
    if forward(guess) == value:
        return guess
    for _ in range(16):
        lo = math.nextafter(lo, -math.inf)
        hi = math.nextafter(hi, math.inf)
        if forward(lo) == value:
            return lo
        if forward(hi) == value:
            return hi
    return guess


def _fmt(x):
    return repr(float(x))


def to_case_text(net: Network, name: str = "case") -> str:
    """Write ``net`` as MATPOWER case text.

    Parsing the result reproduces ``net`` exactly when ``net`` itself came
    from :func:`parse_case`.
    """
    base = net.base_mva

    def mw(pu):
        return _preimage(pu, lambda y: y / base, pu * base)

    def neg_mw(pu):
        # parse computes (0.0 - load) / base for buses without generators
        return _preimage(pu, lambda y: (0.0 - y) / base, -pu * base)

    lines = [f"function mpc = {name}", "mpc.version = '2';", f"mpc.baseMVA = {_fmt(base)};", "",
             "%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin",
             "mpc.bus = ["]
    gens = []
    for b in net.buses:
        if b.kind == BusKind.PQ:
            pd, qd = neg_mw(b.p_inj), neg_mw(b.q_inj)
        else:
            pd, qd = 0.0, 0.0
            gens.append((b.id, mw(b.p_inj), mw(b.q_inj), b.v_mag_setpoint))
        row = [b.id, int(b.kind), pd, qd, mw(b.shunt_g), mw(b.shunt_b), 1,
               b.v_mag_setpoint, 0, 0, 1, 1.1, 0.9]
        lines.append("\t" + "\t".join(_fmt(v) if isinstance(v, float) else str(v) for v in row) + ";")
    lines += ["];", "", "%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin", "mpc.gen = ["]
    for bid, p, q, v in gens:
        lines.append(f"\t{bid}\t{_fmt(p)}\t{_fmt(q)}\t9999\t-9999\t{_fmt(v)}\t{_fmt(base)}\t1\t9999\t-9999;")
    lines += ["];", "",
              "%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax",
              "mpc.branch = ["]
    for br in net.branches:
        shift = _preimage(br.phase_shift, math.radians, math.degrees(br.phase_shift))
        lines.append(
            f"\t{br.from_bus}\t{br.to_bus}\t{_fmt(br.resistance)}\t{_fmt(br.reactance)}\t"
            f"{_fmt(br.shunt_b)}\t0\t0\t0\t{_fmt(br.tap_ratio)}\t{_fmt(shift)}\t1\t-360\t360;"
        )
    lines += ["];", ""]
    return "\n".join(lines)


def to_json_dict(net: Network) -> dict:
    d = asdict(net)
    for b in d["buses"]:
        b["kind"] = BusKind(b["kind"]).name
    return d


def to_json(net: Network) -> str:
    """Canonical JSON dump, used by ``gridreduce inspect`` and for hashing."""
    return json.dumps(to_json_dict(net), sort_keys=True, indent=1)


def fingerprint(net: Network) -> str:
    return hashlib.sha256(to_json(net).encode()).hexdigest()
