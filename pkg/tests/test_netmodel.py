import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridreduce import data_path
from gridreduce.errors import Disconnected, MalformedCase, NoSlack
from gridreduce.netmodel import (
    BusKind,
    Network,
    fingerprint,
    parse_case,
    to_case_text,
    to_json,
    validate,
)

from conftest import line, make_net

CASE = """
mpc.baseMVA = {base};
mpc.bus = [
{buses}
];
mpc.gen = [
{gens}
];
mpc.branch = [
{branches}
];
"""


def case_text(buses, gens, branches, base=100):
    def fmt(rows):
        return "\n".join("\t" + " ".join(str(v) for v in r) + ";" for r in rows)

    return CASE.format(base=base, buses=fmt(buses), gens=fmt(gens), branches=fmt(branches))


def bus(i, kind, pd=0, qd=0, gs=0, bs=0, vm=1.0):
    return [i, kind, pd, qd, gs, bs, 1, vm, 0, 230, 1, 1.1, 0.9]


def gen(i, pg, qg=0, vg=1.0, status=1):
    return [i, pg, qg, 999, -999, vg, 100, status, 999, 0]


def branch(f, t, r=0.0, x=0.1, b=0.0, ratio=0, angle=0, status=1):
    return [f, t, r, x, b, 0, 0, 0, ratio, angle, status, -360, 360]


def test_six_bus_parses_to_per_unit_injections():
    net = parse_case(data_path("case6_zonal.m").read_text())
    assert net.n_bus == 6 and net.n_branch == 7
    assert net.base_mva == 100.0
    assert net.ref_bus == 1
    np.testing.assert_allclose(net.p_inj, [-4.0, 1.0, 2.0, 0.5, 0.3, 0.2])
    assert all(b.reactance == 0.1 and b.resistance == 0.0 for b in net.branches)


def test_ieee118_parses():
    net = parse_case(data_path("case118.m").read_text())
    assert net.n_bus == 118
    assert net.n_branch == 186
    assert net.ref_bus == 69


def test_injection_sums_generators_minus_load():
    text = case_text([bus(1, 3, pd=50), bus(2, 2, pd=10, qd=5)],
                     [gen(1, 0), gen(2, 30, 4), gen(2, 20, 1)],
                     [branch(1, 2)])
    net = parse_case(text)
    assert net.p_inj[1] == pytest.approx(0.4)
    assert net.q_inj[1] == pytest.approx(0.0)
    assert net.p_inj[0] == pytest.approx(-0.5)


def test_out_of_service_elements_dropped():
    text = case_text([bus(1, 3), bus(2, 2), bus(3, 1), bus(4, 4)],
                     [gen(1, 0), gen(2, 50, status=0)],
                     [branch(1, 2), branch(2, 3), branch(1, 3, status=0), branch(3, 4)])
    net = parse_case(text)
    assert net.n_bus == 3
    assert net.n_branch == 2
    # PV bus that lost its only generator is demoted to PQ
    assert net.buses[1].kind == BusKind.PQ
    assert net.p_inj[1] == 0.0


def test_pv_setpoint_comes_from_generator():
    text = case_text([bus(1, 3, vm=1.0), bus(2, 2, vm=0.97)], [gen(1, 0, vg=1.04), gen(2, 10, vg=1.02)],
                     [branch(1, 2)])
    net = parse_case(text)
    assert [b.v_mag_setpoint for b in net.buses] == [1.04, 1.02]


def test_tap_zero_means_nominal_and_shift_in_radians():
    text = case_text([bus(1, 3), bus(2, 1)], [gen(1, 0)],
                     [branch(1, 2, ratio=0, angle=0), branch(1, 2, ratio=0.98, angle=30)])
    net = parse_case(text)
    assert net.branches[0].tap_ratio == 1.0
    assert net.branches[1].tap_ratio == 0.98
    assert net.branches[1].phase_shift == pytest.approx(math.pi / 6)


def test_no_slack_raises():
    text = case_text([bus(1, 2), bus(2, 1)], [gen(1, 10)], [branch(1, 2)])
    with pytest.raises(NoSlack):
        parse_case(text)


def test_disconnected_raises():
    text = case_text([bus(1, 3), bus(2, 1), bus(3, 1)], [gen(1, 0)], [branch(1, 2)])
    with pytest.raises(Disconnected):
        parse_case(text)


@pytest.mark.parametrize("text, needle", [
    ("mpc.bus = [1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;];", "baseMVA"),
    ("mpc.baseMVA = 100;\nmpc.bus = [1 3 0 0 0 0 1 1 0 230 1 1.1 0.9;];", "gen"),
    ("mpc.baseMVA = abc;", "baseMVA"),
])
def test_malformed_case(text, needle):
    with pytest.raises(MalformedCase, match=needle):
        parse_case(text)


def test_dangling_branch_named():
    text = case_text([bus(1, 3), bus(2, 1)], [gen(1, 0)], [branch(1, 2), branch(2, 9)])
    with pytest.raises(MalformedCase, match="unknown bus 9"):
        parse_case(text)


def test_zero_impedance_branch_rejected():
    text = case_text([bus(1, 3), bus(2, 1)], [gen(1, 0)], [branch(1, 2, r=0, x=0)])
    with pytest.raises(MalformedCase, match="zero impedance"):
        parse_case(text)


def test_validate_reports_each_rule():
    from gridreduce.netmodel import Branch, Bus

    buses = (Bus(1, BusKind.SLACK, 0, 0, 1.0), Bus(2, BusKind.SLACK, 0, 0, 0.0),
             Bus(2, BusKind.PQ, 0, 0, 1.0))
    branches = (Branch(1, 1, 0.0, -10.0), Branch(1, 2, 0.0, 0.0), Branch(1, 2, 0.0, -10.0, tap_ratio=-1))
    rules = {v.rule for v in validate(Network(100.0, buses, branches, 3))}
    assert {"DuplicateBusId", "DuplicateSlack", "RefBusMismatch", "NonPositiveSetpoint",
            "SelfLoop", "ZeroAdmittance", "NonPositiveTap"} <= rules


def test_validate_clean_network():
    assert validate(make_net([0.0, 0.0], [line(1, 2, 0.1)])) == []


@pytest.mark.parametrize("name", ["case6_zonal.m", "case118.m"])
def test_round_trip_shipped_cases(name):
    net = parse_case(data_path(name).read_text())
    again = parse_case(to_case_text(net))
    assert again == net
    assert to_json(again) == to_json(net)
    assert fingerprint(again) == fingerprint(net)


finite = st.floats(min_value=-5.0, max_value=5.0, allow_nan=False).map(lambda v: round(v, 4))
react = st.floats(min_value=0.01, max_value=1.0).map(lambda v: round(v, 4))


@settings(max_examples=60, deadline=None)
@given(
    n=st.integers(2, 6),
    data=st.data(),
)
def test_round_trip_random_cases(n, data):
    buses = [bus(1, 3, pd=data.draw(finite) * 100)]
    gens = [gen(1, 0.0, vg=data.draw(st.sampled_from([1.0, 1.02, 1.05])))]
    for i in range(2, n + 1):
        kind = data.draw(st.sampled_from([1, 2]))
        buses.append(bus(i, kind, pd=data.draw(finite) * 100, qd=data.draw(finite) * 10,
                         bs=data.draw(finite)))
        if kind == 2:
            gens.append(gen(i, data.draw(finite) * 100, vg=1.01))
    branches = [branch(data.draw(st.integers(1, i - 1)), i, r=data.draw(react) / 10,
                       x=data.draw(react), b=data.draw(react) / 10,
                       ratio=data.draw(st.sampled_from([0, 0.95, 1.05])),
                       angle=data.draw(st.sampled_from([0, -3, 10])))
                for i in range(2, n + 1)]
    net = parse_case(case_text(buses, gens, branches))
    assert parse_case(to_case_text(net)) == net


def test_fingerprint_sensitive_to_change():
    a = make_net([0.0, 0.5], [line(1, 2, 0.1)])
    b = make_net([0.0, 0.5], [line(1, 2, 0.2)])
    assert fingerprint(a) != fingerprint(b)
    assert fingerprint(a) == fingerprint(make_net([0.0, 0.5], [line(1, 2, 0.1)]))
