import json
import math

import numpy as np
import pytest

from ctrlcurv import ControlDomain, StatePoint, builtin_system, emit_system, load_system, parse_system
from ctrlcurv.errors import DomainError, ExpressionSyntaxError, UnknownFamily, UnknownIdentifier
from ctrlcurv.system import MAX_JET_ORDER

FAMILIES = [
    builtin_system("conformal_frame", phi="0"),
    builtin_system("conformal_frame", phi="-log(q2)"),
    builtin_system("conformal_frame", phi="log(2/(1 + q1^2 + q2^2))"),
    builtin_system("zermelo", phi="0.3*q1*q2", drift1="0.1*q2", drift2="0.05*q1^2"),
    builtin_system("normal_form", a="0.3*q2 + 0.1*q1*q2 + 0.2*q2^2"),
    builtin_system("normal_form", a="q2 + 0.1*u", eps=-1),
    builtin_system("abnormal_form", a="0.2*q1 + q2^2"),
    parse_system(json.dumps({"name": "p", "f1": "sin(q1*u) + 2", "f2": "atan(q2) * exp(u)", "control_domain": {"kind": "interval", "min": -1, "max": 1}})),
]


def test_parse_circle_system_derivatives():
    s = parse_system('{"name": "uni", "f1": "cos(u)", "f2": "sin(u)", "control_domain": {"kind": "circle"}}')
    jet = s.evaluator(StatePoint(0.3, 0.4), 0.0, 1)
    assert jet.partial(0, (0, 0, 1)) == 0.0
    assert jet.partial(1, (0, 0, 1)) == 1.0


def test_parse_second_derivative_example():
    s = parse_system('{"name": "n", "f1": "u", "f2": "1 - exp(2*0)*u^2", "control_domain": {"kind": "interval", "min": -1, "max": 1}}')
    assert s.evaluator(StatePoint(0, 0), 0.0, 2).partial(1, (0, 0, 2)) == -2.0


def test_unknown_identifier():
    with pytest.raises(UnknownIdentifier):
        parse_system('{"name": "bad", "f1": "q3", "f2": "u", "control_domain": {"kind": "circle"}}')


@pytest.mark.parametrize(
    "domain",
    [None, {"kind": "interval", "min": 1, "max": 0}, {"kind": "square"}, {"kind": "interval", "min": "a", "max": 1}, "circle"],
)
def test_domain_errors(domain):
    data = {"name": "d", "f1": "u", "f2": "1"}
    if domain is not None:
        data["control_domain"] = domain
    with pytest.raises(DomainError):
        parse_system(json.dumps(data))


def test_syntax_error_position_is_reported():
    with pytest.raises(ExpressionSyntaxError, match="column"):
        parse_system('{"name": "bad", "f1": "cos(u", "f2": "u", "control_domain": {"kind": "circle"}}')


def test_builtin_examples():
    uni = builtin_system("conformal_frame", phi="0")
    np.testing.assert_allclose(uni(0.5, -2.0, 0.7), [math.cos(0.7), math.sin(0.7)])
    hyp = builtin_system("conformal_frame", phi="-log(q2)")
    np.testing.assert_allclose(hyp(0.1, 2.0, 0.3), [2 * math.cos(0.3), 2 * math.sin(0.3)], rtol=1e-15)
    nf = builtin_system("normal_form", a="q2")
    np.testing.assert_allclose(nf(0.0, 0.5, 0.4), [0.4, 1 - math.exp(1.0) * 0.16], rtol=1e-15)
    assert nf.control_domain == ControlDomain.interval(-0.9, 0.9)
    assert uni.control_domain.kind == "circle"
    ab = builtin_system("abnormal_form", a="0")
    np.testing.assert_allclose(ab(0, 0, 0.25), [0.25, 0.5625])
    with pytest.raises(UnknownFamily):
        builtin_system("bogus")
    with pytest.raises(ExpressionSyntaxError):
        builtin_system("normal_form", a="q2 +")


@pytest.mark.parametrize("system", FAMILIES, ids=lambda s: s.name)
def test_jet_matches_finite_differences(system):
    """Order-3 jet entries equal central differences of the order-2 jet (h = 1e-4, rel 1e-5)."""
    h = 1e-4
    q1, q2, u = 0.21, 0.63, 0.37
    j3 = system.taylor(q1, q2, u, 3)
    scale = max(abs(v) for t in j3 for v in t.partials().values())
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = h
        plus = system.taylor(*(np.array([q1, q2, u]) + e), 2)
        minus = system.taylor(*(np.array([q1, q2, u]) - e), 2)
        for comp in range(2):
            for m, vp in plus[comp].partials().items():
                fd = (vp - minus[comp].partials()[m]) / (2 * h)
                mm = list(m)
                mm[axis] += 1
                exact = j3[comp].partial(tuple(mm))
                assert abs(fd - exact) <= 1e-5 * max(abs(exact), 1e-3 * scale), (comp, m, axis)


@pytest.mark.parametrize("system", FAMILIES, ids=lambda s: s.name)
def test_jet_restriction(system):
    q = StatePoint(0.1, 0.7)
    j4 = system.evaluator(q, 0.2, MAX_JET_ORDER)
    j3 = system.evaluator(q, 0.2, 3)
    np.testing.assert_array_equal(j4.restrict(3).f1.c, j3.f1.c)
    np.testing.assert_array_equal(j4.restrict(3).f2.c, j3.f2.c)


def test_jet_order_cap():
    with pytest.raises(ValueError):
        FAMILIES[0].evaluator(StatePoint(0, 0), 0.0, 5)


@pytest.mark.parametrize("system", FAMILIES, ids=lambda s: s.name)
def test_round_trip(system, tmp_path):
    text = emit_system(system)
    path = tmp_path / "sys.json"
    path.write_text(text)
    back = load_system(path)
    for q1, q2, u in [(0.1, 0.8, 0.3), (-0.4, 1.3, 0.7)]:
        a = system.taylor(q1, q2, u, 3)
        b = back.taylor(q1, q2, u, 3)
        np.testing.assert_array_equal(a[0].c, b[0].c)
        np.testing.assert_array_equal(a[1].c, b[1].c)
    assert back.control_domain == system.control_domain


def test_explicit_round_trip_is_canonical():
    s = FAMILIES[-1]
    once = emit_system(s)
    assert emit_system(parse_system(once)) == once


def test_circle_periodicity():
    for s in FAMILIES[:4]:
        a = s.evaluator(StatePoint(0.2, 0.9), 0.4, 4)
        b = s.evaluator(StatePoint(0.2, 0.9), 0.4 + 2 * math.pi, 4)
        np.testing.assert_allclose(a.f1.c, b.f1.c, atol=1e-14)
        np.testing.assert_allclose(a.f2.c, b.f2.c, atol=1e-14)


def test_determinism():
    s = FAMILIES[3]
    a = s.taylor(0.3, 0.2, 0.1, 4)
    b = s.taylor(0.3, 0.2, 0.1, 4)
    assert a[0].c.tobytes() == b[0].c.tobytes()


def test_state_point_rejects_nonfinite():
    with pytest.raises(ValueError):
        StatePoint(float("nan"), 0.0)
