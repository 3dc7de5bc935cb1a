"""
Zonal reduction: partition handling, tie-line enumeration, aggregation
matrices and baseline equivalent parameters.

Zones are numbered 0..zone_count-1. Each tie-line joins a zone pair
``(a, b)`` with ``a < b`` and is oriented from ``a`` to ``b``; tie-lines are
listed in sorted pair order. The incidence matrix drops the column of the
reference zone (the zone holding the network's slack bus).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from gridreduce.errors import (
    DimensionMismatch,
    DisconnectedReduction,
    InputError,
    OverlappingZones,
    UnknownBus,
    ZeroReactanceBranch,
)
from gridreduce.netmodel import Network, fingerprint


@dataclass(frozen=True)
class ZonePartition:
    assignment: dict  # bus id -> zone id
    zone_count: int
    ref_zone: int

    def members(self, zone: int) -> list:
        return sorted(b for b, z in self.assignment.items() if z == zone)

    def zones(self) -> list:
        return [self.members(z) for z in range(self.zone_count)]


@dataclass(frozen=True)
class TieLine:
    zones: tuple  # (a, b), a < b
    branches: tuple  # original branch indices
    signs: tuple  # +1 if the branch runs a -> b, else -1


@dataclass(frozen=True, eq=False)
class ReducedNetwork:
    zone_count: int
    tie_lines: tuple
    incidence: np.ndarray  # |E_R| x (|N_R| - 1)
    ref_zone: int

    @property
    def n_ties(self) -> int:
        return len(self.tie_lines)

    @property
    def non_ref_zones(self) -> list:
        return [z for z in range(self.zone_count) if z != self.ref_zone]

    @property
    def tie_order(self) -> list:
        return [tuple(t.zones) for t in self.tie_lines]

    def full_incidence(self) -> np.ndarray:
        """Incidence including the reference-zone column."""
        A = np.zeros((self.n_ties, self.zone_count))
        for k, t in enumerate(self.tie_lines):
            A[k, t.zones[0]] = 1.0
            A[k, t.zones[1]] = -1.0
        return A


@dataclass(frozen=True, eq=False)
class FlowAggregator:
    matrix: np.ndarray  # |E_R| x |E|, entries in {-1, 0, 1}


@dataclass(frozen=True, eq=False)
class InjectionAggregator:
    matrix: np.ndarray  # |N_R| x |N|, entries in {0, 1}


@dataclass(frozen=True, eq=False)
class EquivalentParams:
    b: np.ndarray
    gamma: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        for name in ("b", "gamma", "rho"):
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float))

    def pack(self) -> np.ndarray:
        """Flat vector in the fixed order [b; gamma; rho]."""
        return np.concatenate([self.b, self.gamma, self.rho])

    @classmethod
    def unpack(cls, x, n_ties: int, n_zones: int) -> "EquivalentParams":
        x = np.asarray(x, dtype=float)
        if x.shape != (2 * n_ties + n_zones - 1,):
            raise DimensionMismatch(f"parameter vector has shape {x.shape}")
        return cls(x[:n_ties], x[n_ties:n_ties + n_zones - 1], x[n_ties + n_zones - 1:])

    def to_dict(self) -> dict:
        return {"b": self.b.tolist(), "gamma": self.gamma.tolist(), "rho": self.rho.tolist()}

    def __eq__(self, other):
        if not isinstance(other, EquivalentParams):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("b", "gamma", "rho"))


def partition_from_zones(zones, net: Network) -> ZonePartition:
    """Build a partition from a list of bus-id groups.

    Group order defines zone ids. Buses not in any group become singleton
    zones, numbered after the listed groups in ascending bus id.
    """
    known = net.bus_index
    assignment = {}
    for z, group in enumerate(zones):
        for bid in group:
            bid = int(bid)
            if bid not in known:
                raise UnknownBus(f"zone {z} lists bus {bid}, which is not in the network")
            if bid in assignment:
                raise OverlappingZones(f"bus {bid} is listed in zones {assignment[bid]} and {z}")
            assignment[bid] = z
    count = len(zones)
    for bid in sorted(known):
        if bid not in assignment:
            assignment[bid] = count
            count += 1
    # keep only non-empty listed groups contiguous
    used = sorted(set(assignment.values()))
    remap = {z: k for k, z in enumerate(used)}
    assignment = {b: remap[z] for b, z in sorted(assignment.items())}
    return ZonePartition(assignment, len(used), assignment[net.ref_bus])


def load_partition(text: str, net: Network) -> ZonePartition:
    """Parse a zone file ``{"zones": [[bus ids], ...]}``; empty text means all singletons."""
    if not text.strip():
        return partition_from_zones([], net)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"zone file is not valid JSON: {e}") from None
    zones = doc.get("zones") if isinstance(doc, dict) else None
    if not isinstance(zones, list) or not all(isinstance(g, list) for g in zones):
        raise InputError('zone file must be an object {"zones": [[bus ids], ...]}')
    return partition_from_zones(zones, net)


def partition_hash(net: Network, zp: ZonePartition) -> str:
    doc = {"network": fingerprint(net), "assignment": sorted(zp.assignment.items()),
           "ref_zone": zp.ref_zone}
    return hashlib.sha256(json.dumps(doc).encode()).hexdigest()


def build_reduction(net: Network, zp: ZonePartition):
    """Return ``(ReducedNetwork, FlowAggregator, InjectionAggregator)``."""
    if set(zp.assignment) != set(net.bus_index):
        raise UnknownBus("zone partition does not cover exactly the network's buses")
    crossing = {}
    for k, br in enumerate(net.branches):
        za, zb = zp.assignment[br.from_bus], zp.assignment[br.to_bus]
        if za == zb:
            continue
        pair = (min(za, zb), max(za, zb))
        crossing.setdefault(pair, []).append((k, 1 if za < zb else -1))

    ties = tuple(
        TieLine(pair, tuple(k for k, _ in members), tuple(s for _, s in members))
        for pair, members in sorted(crossing.items())
    )

    g = nx.Graph()
    g.add_nodes_from(range(zp.zone_count))
    g.add_edges_from(t.zones for t in ties)
    if not nx.is_connected(g):
        raise DisconnectedReduction(
            f"reduced network has {nx.number_connected_components(g)} components")

    A_full = np.zeros((len(ties), zp.zone_count))
    psi_flow = np.zeros((len(ties), net.n_branch))
    for k, t in enumerate(ties):
        A_full[k, t.zones[0]] = 1.0
        A_full[k, t.zones[1]] = -1.0
        psi_flow[k, list(t.branches)] = t.signs
    A = np.delete(A_full, zp.ref_zone, axis=1)

    psi_g = np.zeros((zp.zone_count, net.n_bus))
    for bid, z in zp.assignment.items():
        psi_g[z, net.bus_index[bid]] = 1.0

    rn = ReducedNetwork(zp.zone_count, ties, A, zp.ref_zone)
    return rn, FlowAggregator(psi_flow), InjectionAggregator(psi_g)


def aggregate_injections(P, g: InjectionAggregator, zp: ZonePartition) -> np.ndarray:
    """Zone injections with the reference zone dropped.

    ``P`` may be a single per-bus vector or a scenarios-by-buses matrix.
    """
    P = np.asarray(P, dtype=float)
    if P.shape[-1] != g.matrix.shape[1]:
        raise DimensionMismatch(f"injections have {P.shape[-1]} buses, expected {g.matrix.shape[1]}")
    full = P @ g.matrix.T
    return np.delete(full, zp.ref_zone, axis=-1)


def aggregate_flows(p_ac, f: FlowAggregator) -> np.ndarray:
    """Signed inter-zonal flows from per-branch from-end flows (vector or matrix)."""
    p_ac = np.asarray(p_ac, dtype=float)
    if p_ac.shape[-1] != f.matrix.shape[1]:
        raise DimensionMismatch(f"flows have {p_ac.shape[-1]} branches, expected {f.matrix.shape[1]}")
    return p_ac @ f.matrix.T


def init_params(net: Network, rn: ReducedNetwork) -> EquivalentParams:
    """Baseline parameters: parallel 1/x susceptance per tie-line, zero biases."""
    b = np.zeros(rn.n_ties)
    for k, t in enumerate(rn.tie_lines):
        for e in t.branches:
            x = net.branches[e].reactance
            if x == 0:
                raise ZeroReactanceBranch(f"branch {e} crossing tie {t.zones} has zero reactance")
            b[k] += 1.0 / x
    return EquivalentParams(b, np.zeros(rn.zone_count - 1), np.zeros(rn.n_ties))


@dataclass
class Reduction:
    """Everything derived from one (network, partition) pair."""

    net: Network
    partition: ZonePartition
    reduced: ReducedNetwork
    flow_agg: FlowAggregator
    inj_agg: InjectionAggregator
    zone_hash: str = field(default="")

    @classmethod
    def build(cls, net: Network, zp: ZonePartition) -> "Reduction":
        rn, fa, ia = build_reduction(net, zp)
        return cls(net, zp, rn, fa, ia, partition_hash(net, zp))

    def baseline(self) -> EquivalentParams:
        return init_params(self.net, self.reduced)
