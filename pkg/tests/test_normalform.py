import json
import math

import numpy as np
import pytest

from ctrlcurv import (
    StatePoint,
    abnormal_extension,
    build_chart,
    builtin_system,
    curvature_at,
    curvature_series_abnormal,
    extract_a,
    transversal_curve,
    verify_normal_form,
)
from ctrlcurv.errors import ChartSingular, NonPositiveArgument, WrongFamily
from ctrlcurv.normalform import NormalFormChart, dump_chart


@pytest.fixture(scope="module")
def unicycle_chart():
    return build_chart(builtin_system("conformal_frame", phi="0"), (0.0, 0.0), 0.0)


@pytest.fixture(scope="module")
def hyperbolic_chart():
    return build_chart(builtin_system("conformal_frame", phi="-log(q2)"), (0.1, 1.2), 0.4)


@pytest.fixture(scope="module")
def zermelo_chart():
    z = builtin_system("zermelo", phi="0.3*q1*q2 + 0.2*q2^2", drift1="0.1*q2", drift2="0.05*q1^2")
    return build_chart(z, (0.0, 0.0), 0.3)


def test_transversal_curve_flat():
    uni = builtin_system("conformal_frame", phi="0")
    tc = transversal_curve(uni, (0, 0), 0.0, tau_range=0.5, n_samples=5)
    np.testing.assert_allclose(tc.states[:, :2], np.column_stack([np.zeros(5), -tc.tau]), atol=1e-14)
    for t, z in zip(tc.tangents, tc.states):
        f = uni(z[0], z[1], z[2])
        assert t[0] * f[1] - t[1] * f[0] > 0.5
    single = transversal_curve(uni, (0, 0), 0.0, tau_range=0.0)
    assert single.states.shape[0] == 1


def test_unicycle_chart_is_flat(unicycle_chart):
    ch = unicycle_chart
    assert verify_normal_form(ch).passed
    for w in (-0.4, 0.0, 0.3):
        assert ch.normal_f2(0.05, -0.03, w) == pytest.approx(math.sqrt(1 - w * w), abs=1e-9)
        expected = -0.5 * math.log(2) if w == 0 else 0.5 * math.log((1 - math.sqrt(1 - w * w)) / (w * w))
        assert ch.a_at(0.05, -0.03, w) == pytest.approx(expected, abs=1e-7)


def test_normal_form_input_gives_identity_chart():
    ch = build_chart(builtin_system("normal_form", a="0"), (0, 0), 0.0)
    for i in range(len(ch.x1s)):
        for j in range(len(ch.x2s)):
            np.testing.assert_allclose(ch.grid_point(i, j).q, [ch.x1s[i], ch.x2s[j]], atol=1e-9)
    A = extract_a(ch)
    assert np.max(np.abs(A.values)) < 1e-9


def test_concave_normal_form():
    ch = build_chart(builtin_system("normal_form", a="0", eps=-1), (0, 0), 0.0)
    r = verify_normal_form(ch)
    assert ch.epsilon == -1 and r.passed and abs(r.a_origin) < 1e-9


def test_hyperbolic_chart(hyperbolic_chart):
    ch = hyperbolic_chart
    r = verify_normal_form(ch)
    assert r.passed, r.notes
    assert ch.curvature_from_a(0.0, 0.0) == pytest.approx(-1.0, abs=1e-3)
    # independent cross-check: kappa = -a_22 - a_2^2 at w = 0 from sampled a
    h = 1e-2
    a = [ch.a_at(0.0, s * h, 0.0) for s in (-1, 0, 1)]
    a2, a22 = (a[2] - a[0]) / (2 * h), (a[2] - 2 * a[1] + a[0]) / h**2
    assert -a22 - a2**2 == pytest.approx(-1.0, abs=2e-3)


def test_corrupted_chart_fails():
    def distortion(x1, x2):
        return np.array([0.0, 1e-3]), np.zeros((2, 2))

    ch = NormalFormChart(builtin_system("conformal_frame", phi="-log(q2)"), (0.1, 1.2), 0.4, distortion=distortion)
    r = verify_normal_form(ch)
    assert not r.passed and r.status == "FAIL" and r.notes


def test_chart_round_trip(hyperbolic_chart):
    ch = hyperbolic_chart
    for x in [(0.03, -0.07), (-0.09, 0.1), (0.0, 0.05)]:
        np.testing.assert_allclose(ch.phi_inverse(ch.phi(*x)), x, atol=1e-9)


def test_feedback_is_inverted(zermelo_chart):
    ch = zermelo_chart
    for x1, x2, w in [(0.05, -0.04, 0.2), (-0.08, 0.06, -0.3)]:
        u = ch.control_for(x1, x2, w)
        assert abs(ch.feedback(x1, x2, u) - w) < 1e-12


def test_curvature_is_transported(zermelo_chart):
    ch = zermelo_chart
    z = ch.system
    for (x1, x2), w in [((0.05, -0.04), 0.2), ((-0.08, 0.06), -0.3), ((0.02, 0.03), 0.0)]:
        cp = ch.point(x1, x2)
        k0 = curvature_at(z, StatePoint(*cp.q), ch.control_for(x1, x2, w)).kappa
        assert ch.curvature_at(x1, x2, w) == pytest.approx(k0, abs=1e-4)
    k0 = curvature_at(z, StatePoint(*ch.phi(0.02, 0.03)), ch.control_for(0.02, 0.03, 0.0)).kappa
    assert ch.curvature_from_a(0.02, 0.03) == pytest.approx(k0, abs=1e-4)


def test_bracket_base_curve():
    ch = build_chart(builtin_system("normal_form", a="q2"), (0, 0), 0.0, base="bracket")
    assert verify_normal_form(ch).passed
    assert np.max(np.abs(ch.grid_point(0, 0).q - [-0.1, -0.1])) > 1e-3


def test_unknown_base_mode():
    with pytest.raises(ValueError):
        build_chart(builtin_system("normal_form", a="0"), (0, 0), 0.0, base="other")


def test_chart_leaving_domain_is_singular():
    s = builtin_system("conformal_frame", phi="log(1 - q1)")
    with pytest.raises(ChartSingular):
        build_chart(s, (0, 0), 0.0, x2_range=(-1.0, 1.0))


def test_wrong_epsilon_gives_nonpositive_argument():
    ch = build_chart(builtin_system("normal_form", a="0"), (0, 0), 0.0, resolution=3)
    ch.epsilon = -1
    with pytest.raises(NonPositiveArgument):
        ch.a_at(0.0, 0.0, 0.3)


def test_dump_chart(tmp_path):
    ch = build_chart(builtin_system("normal_form", a="0"), (0, 0), 0.0, resolution=3)
    r = verify_normal_form(ch)
    dump_chart(ch, r, str(tmp_path))
    assert (tmp_path / "grid.csv").read_text().splitlines()[0] == "x1,x2,q1,q2"
    lines = (tmp_path / "a_samples.csv").read_text().splitlines()
    assert lines[0] == "x1,x2,u,a" and len(lines) == 1 + 27
    meta = json.loads((tmp_path / "report.json").read_text())
    assert meta["status"] == "PASS" and meta["base_curve"] == "control" and meta["epsilon"] == 1


@pytest.mark.parametrize(
    "a, q",
    [("0", (0.2, 0.3)), ("0.2*q1", (0.1, -0.2)), ("q1^2/2", (0.3, 0.1)), ("0.3*q1*q2", (0.2, 0.4)), ("0.1*q1 + 0.2*u*q1", (0.3, 0.2))],
)
def test_abnormal_extension(a, q):
    s = builtin_system("abnormal_form", a=a)
    res = abnormal_extension(s, StatePoint(*q))
    assert res.kappa_limit == pytest.approx(curvature_series_abnormal(s, StatePoint(*q)), abs=1e-4)
    assert res.series_value == curvature_series_abnormal(s, StatePoint(*q))
    assert all(u < 1 for u in res.controls)


def test_abnormal_extension_wrong_family():
    with pytest.raises(WrongFamily):
        abnormal_extension(builtin_system("normal_form", a="0"), StatePoint(0, 0))
