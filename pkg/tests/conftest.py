import numpy as np
import pytest

from gridreduce import load_bundled
from gridreduce.netmodel import Branch, Bus, BusKind, Network
from gridreduce.reduce import Reduction

# Table of acceptance criteria: number -> short description. Tests opt in
# with ``@pytest.mark.criterion(n)``; the summary hook prints one line each.
CRITERIA = {
    1: "forward model reproduces the published 6-bus reduced flows",
    2: "AC ground truth on the 6-bus base case matches the published flows",
    3: "single-scenario training drives MAE below 0.01 MW",
    4: "range training beats the untrained baseline MAE by 5x (6-bus)",
    5: "118-bus training converges with test max error <= 1 pu and below baseline",
    6: "analytic gradients match central differences on 25 instances",
    7: "oracle equivalences (B', PTDF path, batch sum, naive loss)",
    8: "invariant suites pass standalone",
}

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    n = getattr(report, "_criterion", None)
    if n is None:
        return
    prev = _results.get(n, "PASS")
    _results[n] = "PASS" if prev == "PASS" and report.outcome == "passed" else "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result()._criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(CRITERIA):
        status = _results.get(n, "NOT RUN")
        tr.write_line(f"criterion {n}: {status:7s} {CRITERIA[n]}")


# ---------------------------------------------------------------------------
# fixtures


@pytest.fixture(scope="session")
def six():
    net, zp = load_bundled("case6_zonal.m", "zones6.json")
    return Reduction.build(net, zp)


@pytest.fixture(scope="session")
def ieee118():
    net, zp = load_bundled("case118.m", "zones118.json")
    return Reduction.build(net, zp)


def line(f, t, x, r=0.0):
    return Branch.from_impedance(f, t, r, x)


def make_net(p, branches, kinds=None, v=None, q=None, base=100.0):
    """Small network from per-unit injections; bus 1 is the slack."""
    n = len(p)
    kinds = kinds or [BusKind.SLACK] + [BusKind.PQ] * (n - 1)
    v = v or [1.0] * n
    q = q or [0.0] * n
    buses = tuple(Bus(i + 1, kinds[i], p[i], q[i], v[i], 0.0, 0.0) for i in range(n))
    return Network(base, buses, tuple(branches), 1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
