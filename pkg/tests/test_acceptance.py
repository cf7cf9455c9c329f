"""Acceptance criteria, one test per criterion.

Run with ``pytest -v tests/test_acceptance.py``; the terminal summary lists
PASS/FAIL per criterion with the measured figure of merit.
"""

import math
from functools import lru_cache

import numpy as np

from ctrlcurv import (
    StatePoint,
    abnormal_extension,
    build_chart,
    builtin_system,
    convexity_decomposition,
    curvature_at,
    curvature_series_normal,
    extract_a,
    extremal_field,
    feedback_transform,
    fiber_frame,
    gaussian_curvature_conformal,
    integrate_flow,
    integrate_pmp,
    maximizing_covector,
    random_feedback_transform,
    verify_normal_form,
)
from ctrlcurv.errors import RegularityError
from ctrlcurv.regularity import control_grid

HYPERBOLIC_PHI = "-log(q2)"
SPHERE_PHI = "log(2/(1 + q1^2 + q2^2))"
POLK_A = "0.3*q2 + 0.1*q1*q2 + 0.2*q2^2"


def _grid(box, n1, n2):
    return [StatePoint(float(a), float(b)) for a in np.linspace(box[0], box[1], n1) for b in np.linspace(box[2], box[3], n2)]


@lru_cache(maxsize=None)
def flat_samples():
    s = builtin_system("conformal_frame", phi="0")
    us = control_grid(s, None, 8)
    return [curvature_at(s, q, float(u)) for q in _grid((-1, 1, -1, 1), 5, 5) for u in us]


@lru_cache(maxsize=None)
def hyperbolic_samples():
    s = builtin_system("conformal_frame", phi=HYPERBOLIC_PHI)
    us = control_grid(s, None, 8)
    return [curvature_at(s, q, float(u)) for q in _grid((-1, 1, 0.5, 2), 5, 5) for u in us]


@lru_cache(maxsize=None)
def sphere_samples():
    s = builtin_system("conformal_frame", phi=SPHERE_PHI)
    us = control_grid(s, None, 8)
    return [curvature_at(s, q, float(u)) for q in _grid((-0.3, 0.3, -0.3, 0.3), 5, 5) for u in us]


@lru_cache(maxsize=None)
def polk_samples():
    s = builtin_system("normal_form", a=POLK_A)
    us = np.linspace(-0.5, 0.5, 6)
    return s, [curvature_at(s, q, float(u)) for q in _grid((-0.5, 0.5, -0.5, 0.5), 4, 4) for u in us]


@lru_cache(maxsize=None)
def u_expansion_samples():
    s = builtin_system("normal_form", a="q2 + 0.1*u")
    qs = [StatePoint(0.0, 0.0), StatePoint(0.3, -0.2), StatePoint(-0.4, 0.5)]
    us = [0.1, 0.05, 0.025, 0.0125, 0.0]
    return s, qs, {(q, u): curvature_at(s, q, u) for q in qs for u in us}


def test_criterion_01_flat_oracle(record):
    worst = max(abs(s.kappa) for s in flat_samples())
    assert record(1, worst < 1e-6, f"flat frame, 200 samples, max |kappa| = {worst:.2e} (< 1e-6)")


def test_criterion_02_hyperbolic_oracle(record):
    samples = hyperbolic_samples()
    worst = max(abs(s.kappa + 1) for s in samples)
    oracle = max(abs(gaussian_curvature_conformal(HYPERBOLIC_PHI, s.q) + 1) for s in samples)
    ok = worst < 1e-4 and oracle < 1e-12
    assert record(
        2,
        ok,
        f"half-plane frame q2(cos u, sin u), q2 in [0.5, 2], max |kappa + 1| = {worst:.2e} (< 1e-4); "
        "frame convention: see ledger",
    )


def test_criterion_03_sphere_oracle(record):
    samples = sphere_samples()
    worst = max(abs(s.kappa - 1) for s in samples)
    oracle = max(abs(s.kappa - gaussian_curvature_conformal(SPHERE_PHI, s.q)) for s in samples)
    assert record(3, worst < 1e-4 and oracle < 1e-4, f"stereographic sphere near origin, max |kappa - 1| = {worst:.2e} (< 1e-4)")


def test_criterion_04_polk_equivalence(record):
    s, samples = polk_samples()
    worst = max(abs(x.kappa - curvature_series_normal(s, x.q, x.u)) for x in samples)
    assert record(4, worst < 1e-5, f"4x4x6 grid |u| <= 0.5, max |kappa - series| = {worst:.2e} (< 1e-5)")


def test_criterion_05_u_expansion(record):
    s, qs, table = u_expansion_samples()
    limit_err, ratios = 0.0, []
    for q in qs:
        leading = curvature_series_normal(s, q, 0.0)
        limit_err = max(limit_err, abs(table[(q, 0.0)].kappa - leading))
        devs = [abs(table[(q, u)].kappa - leading) for u in (0.1, 0.05, 0.025, 0.0125)]
        ratios += [b / a for a, b in zip(devs, devs[1:])]
    # at least linear decay: halving u must at least halve the deviation
    ok = limit_err < 1e-4 and max(ratios) <= 0.5 + 1e-3
    assert record(
        5,
        ok,
        f"a = q2 + 0.1u, limit error {limit_err:.2e} (< 1e-4), worst halving ratio {max(ratios):.3f} (<= 0.5)",
    )


def test_criterion_06_verticality(record):
    samples = list(flat_samples()) + list(hyperbolic_samples()) + list(sphere_samples()) + polk_samples()[1]
    samples += list(u_expansion_samples()[2].values())
    worst = 0.0
    for s in samples:
        B = s.double_bracket
        side = max(abs(B[0]), abs(B[1]))
        # flat samples have B = 0; the absolute floor applies there
        assert side <= 1e-6 * abs(B[2]) + 1e-12
        if abs(B[2]) > 1e-12:
            worst = max(worst, side / abs(B[2]))
    assert record(6, True, f"{len(samples)} samples from criteria 1-5, max relative horizontal part {worst:.2e} (< 1e-6)")


def test_criterion_07_feedback_invariance(record):
    s = builtin_system("conformal_frame", phi=HYPERBOLIC_PHI)
    box = (0.0, 1.0, 0.5, 2.0)
    us = control_grid(s, None, 5)
    states = _grid(box, 5, 5)
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(10):
        T = random_feedback_transform(rng, box, (float(us[0]), float(us[-1])))
        g = feedback_transform(s, T)
        for q in states:
            x = T.phi((q.q1, q.q2))
            for u in us:
                k0 = curvature_at(s, q, float(u)).kappa
                k1 = curvature_at(g, StatePoint(*x), T.psi_value((q.q1, q.q2), float(u))).kappa
                worst = max(worst, abs(k0 - k1))
    assert record(7, worst < 1e-4, f"10 degree-2 transforms, seed 0, 5x5x5 grid, max deviation {worst:.2e} (< 1e-4)")


def test_criterion_08_normal_form_round_trip(record):
    s = builtin_system("normal_form", a="q2")
    chart = build_chart(s, (0.0, 0.0), 0.0)
    a = extract_a(chart)
    phi_err = max(
        float(np.max(np.abs(chart.grid_point(i, j).q - (x1, x2))))
        for i, x1 in enumerate(chart.x1s)
        for j, x2 in enumerate(chart.x2s)
    )
    a_err = float(np.max(np.abs(a.values - a.x2[None, :, None])))
    report = verify_normal_form(chart)
    worst_res = max(report.residuals.values())
    ok = phi_err < 1e-5 and a_err < 1e-5 and worst_res < 1e-8 and report.passed
    assert record(8, ok, f"phi - id {phi_err:.2e}, a - x2 {a_err:.2e} (< 1e-5), verify residuals {worst_res:.2e} (< 1e-8)")


def test_criterion_09_unicycle_chart(record):
    s = builtin_system("conformal_frame", phi="0")
    chart = build_chart(s, (0.0, 0.0), math.pi / 2)
    report = verify_normal_form(chart)
    err = abs(report.a_origin + math.log(2) / 2)
    assert record(9, err < 1e-4 and report.passed, f"a(0,0,0) = {report.a_origin:.12f}, error {err:.2e} (< 1e-4)")


def _fiber_points(n=50, seed=0):
    systems = [
        builtin_system("conformal_frame", phi=HYPERBOLIC_PHI),
        builtin_system("zermelo", phi="0.3*q1*q2 + 0.2*q2^2", drift1="0.1*q2", drift2="0.05*q1^2"),
        builtin_system("normal_form", a=POLK_A),
    ]
    boxes = [((-1, 1), (0.5, 2), (0, 2 * math.pi)), ((-1, 1), (-1, 1), (0, 2 * math.pi)), ((-0.5, 0.5), (-0.5, 0.5), (-0.8, 0.8))]
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        k = len(out) % 3
        b = boxes[k]
        q = StatePoint(rng.uniform(*b[0]), rng.uniform(*b[1]))
        u = rng.uniform(*b[2])
        try:
            convexity_decomposition(systems[k], q, u)
        except RegularityError:
            continue
        out.append((systems[k], q, u))
    return out


def _fd_fiber(system, q, u, eps, h=2e-4):
    lam = [maximizing_covector(system, q, u + k * h, eps).as_array() for k in (-1, 0, 1)]
    lam_u = (lam[2] - lam[0]) / (2 * h)
    lam_uu = (lam[2] - 2 * lam[1] + lam[0]) / h**2
    al = [convexity_decomposition(system, q, u + k * h).alpha for k in (-1, 1)]
    alpha_u = (al[1] - al[0]) / (2 * h)
    return lam[1], lam_u, lam_uu, alpha_u


def test_criterion_10_fiber_frame_relation(record):
    worst = 0.0
    for system, q, u in _fiber_points():
        fr = fiber_frame(system, q, u)
        lam, lam_u, lam_uu, alpha_u = _fd_fiber(system, q, u, fr.epsilon)
        rate = math.sqrt(fr.alpha)
        rate_u = alpha_u / (2 * rate)
        lam_t = lam_u / rate
        lam_tt = (lam_uu - lam_u * rate_u / rate) / rate**2
        res = np.linalg.norm(lam_tt + fr.epsilon * lam - fr.b * lam_t) / np.linalg.norm(lam)
        worst = max(worst, res)
    assert record(10, worst < 1e-6, f"50 points, 3 systems, max relative residual {worst:.2e} (< 1e-6)")


def test_criterion_11_c0_cross_check(record):
    worst = 0.0
    for system, q, u in _fiber_points():
        fr = fiber_frame(system, q, u)
        lam, lam_u, lam_uu, _ = _fd_fiber(system, q, u, fr.epsilon)
        c0, c1 = np.linalg.solve(np.column_stack([lam, lam_u]), lam_uu)
        worst = max(worst, abs(c0 - fr.c0) / abs(fr.c0))
    assert record(11, worst < 1e-5, f"50 points, max relative |c0 - (-eps alpha)| {worst:.2e} (< 1e-5)")


def test_criterion_12_abnormal_extension(record):
    s = builtin_system("abnormal_form", a="0.2*q1")
    worst = 0.0
    for q in [StatePoint(0, 0), StatePoint(0.5, -0.3), StatePoint(-0.7, 0.2), StatePoint(1.0, 1.0), StatePoint(-0.2, -0.9)]:
        ext = abnormal_extension(s, q)
        assert abs(ext.series_value + 0.04) < 1e-12
        worst = max(worst, abs(ext.kappa_limit + 0.04), abs(ext.kappa_limit - ext.series_value))
    assert record(12, worst < 1e-4, f"5 state points, max |limit + 0.04| and |limit - series| {worst:.2e} (< 1e-4)")


def test_criterion_13_pmp_oracle(record):
    s = builtin_system("conformal_frame", phi=HYPERBOLIC_PHI)
    worst = 0.0
    for q0, u0 in [((0.0, 1.0), 0.0), ((0.3, 0.8), 1.0), ((-0.5, 1.5), 2.5)]:
        traj = integrate_flow(extremal_field(s, 1), (*q0, u0), 1.0, steps=1000)
        _, rows = integrate_pmp(s, q0, u0, 1, 1.0, steps=1000)
        worst = max(worst, float(np.max(np.abs(traj.states[:, :2] - rows[:, :2]))))
    assert record(13, worst < 1e-8, f"hyperbolic frame, 3 extremals on t in [0, 1], max |q - q_pmp| {worst:.2e} (< 1e-8)")
