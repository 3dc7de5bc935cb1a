"""
gridreduce: zonal DC power flow equivalents with parameters learned from
AC power flow.
"""

from importlib import resources

from gridreduce.acpf import ac_mismatch, branch_flows, solve_ac
from gridreduce.dcpf import build_bprime, dc_flows, ptdf_matrix, solve_angles
from gridreduce.netmodel import ACSolution, Branch, Bus, BusKind, Network, parse_case, validate
from gridreduce.reduce import (
    EquivalentParams,
    Reduction,
    ZonePartition,
    aggregate_flows,
    aggregate_injections,
    build_reduction,
    init_params,
    load_partition,
)

__version__ = "0.1.0"


def data_path(name: str):
    """Path to a bundled case or zone file (``case6_zonal.m``, ``zones118.json``...)."""
    return resources.files("gridreduce") / "data" / name


def load_bundled(case: str, zones: str = None):
    """Load a bundled case and optional zone file; returns ``(net, partition)``."""
    net = parse_case(data_path(case).read_text())
    zp = load_partition(data_path(zones).read_text() if zones else "", net)
    return net, zp
