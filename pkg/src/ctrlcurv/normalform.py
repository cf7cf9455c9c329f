"""Microlocal normal forms.

Around a normal extremal the system is brought to

    x1' = w,    x2' = 1 - eps * exp(2 a(x1, x2, w)) * w^2

by a chart built from a field of extremals: a curve N0 through q0 carries
covectors of the level set that annihilate its tangent, and the vertical
coordinate lines are the extremals leaving N0 (x2 = extremal time).  The
new control is w = f~1, the first component of f pushed into the chart.

Around an abnormal extremal the curvature of systems given in the form
x1' = u, x2' = exp(2a)(1 - u)^2 is extrapolated to u = 1 and compared with
its closed-form limit.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .curvature import (
    BracketField,
    curvature_at,
    curvature_from_taylor,
    curvature_series_abnormal,
)
from .errors import (
    ChartSingular,
    ControlGeometryError,
    EvaluationFailed,
    NewtonFailed,
    NoConvergence,
    NonPositiveArgument,
    RootFailed,
    WrongFamily,
)
from .extremal import (
    ExtremalField,
    ScaledField,
    VectorField3,
    VerticalField,
    integrate_ode,
    system_reduced,
)
from .output import atomic_write
from .system import StatePoint, SystemModel
from .taylor import Taylor

U_SWITCH = 0.05
SERIES_ORDER = 10
MAX_STEP = 2e-3


# -- base curves -------------------------------------------------------------------

class ControlBaseField(VectorField3):
    """(f_u(q, u), 0): moves along N0 while holding the extremal control fixed."""

    def __init__(self, system: SystemModel, sign: float = 1.0):
        self.system = system
        self.sign = sign

    def taylor(self, point, order):
        F1, F2 = self.system.taylor(*point, order + 1)
        zero = Taylor.constant(0.0, 3, order)
        return F1.diff(2) * self.sign, F2.diff(2) * self.sign, zero


def _base_field(system: SystemModel, eps: int, mode: str) -> VectorField3:
    if mode == "control":
        return ControlBaseField(system)
    if mode == "bracket":
        return BracketField(VerticalField(system, eps), ExtremalField(system, eps))
    raise ValueError(f"unknown base curve mode {mode!r}; expected 'control' or 'bracket'")


def _oriented(system: SystemModel, field: VectorField3, q0, u0) -> VectorField3:
    """Orient so that (tangent of N0, f(q0, u0)) is a positive frame."""
    g = field([q0[0], q0[1], u0])
    f = system(q0[0], q0[1], u0)
    d = g[0] * f[1] - g[1] * f[0]
    if abs(d) < 1e-12 * (np.linalg.norm(g[:2]) * np.linalg.norm(f) + 1e-300):
        raise ChartSingular("base curve is tangent to the extremal direction at the origin")
    return field if d > 0 else ScaledField(field, -1.0)


@dataclass
class TransversalCurve:
    tau: np.ndarray
    states: np.ndarray
    tangents: np.ndarray
    epsilon: int

    @property
    def base_curve(self) -> np.ndarray:
        return self.states[:, :2]


def transversal_curve(
    system: SystemModel,
    q0: Sequence[float],
    u0: float,
    eps: int | None = None,
    tau_range: float | tuple[float, float] = 0.1,
    n_samples: int = 11,
    max_step: float = MAX_STEP,
) -> TransversalCurve:
    """Flow of the commutator [v, h] from (q0, u0), sampled and projected to the state plane."""
    eps = system_reduced(system, q0[0], q0[1], u0, 0, eps).epsilon
    field = _oriented(system, _base_field(system, eps, "bracket"), q0, u0)
    lo, hi = (-tau_range, tau_range) if np.isscalar(tau_range) else tau_range
    if lo == hi == 0:
        taus = np.array([0.0])
    else:
        taus = np.linspace(lo, hi, n_samples)
    z0 = np.array([q0[0], q0[1], u0], dtype=float)
    states = _sweep(field, z0, taus, max_step)
    tangents = np.array([field(z)[:2] for z in states])
    return TransversalCurve(taus, states, tangents, eps)


def _sweep(field: Callable, z0: np.ndarray, stops: np.ndarray, max_step: float) -> np.ndarray:
    """States of the flow at increasing times ``stops`` (must bracket or include 0)."""
    out = np.zeros((len(stops), len(z0)))
    pos = [i for i, s in enumerate(stops) if s >= 0]
    neg = [i for i, s in enumerate(stops) if s < 0][::-1]
    for order in (pos, neg):
        z, t = z0.copy(), 0.0
        for i in order:
            z = _advance(field, z, stops[i] - t, max_step)
            t = stops[i]
            out[i] = z
    return out


def _advance(fn: Callable, z: np.ndarray, dt: float, max_step: float) -> np.ndarray:
    if dt == 0.0:
        return z.copy()
    n = max(1, math.ceil(abs(dt) / max_step - 1e-9))
    _, ys = integrate_ode(fn, z, dt, steps=n)
    return ys[-1]


# -- the chart ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChartPoint:
    q: np.ndarray
    u_extremal: float
    jacobian: np.ndarray


@dataclass
class ASamples:
    x1: np.ndarray
    x2: np.ndarray
    w: np.ndarray
    values: np.ndarray


class NormalFormChart:
    """Numerically realized chart x -> q with its pushed system and feedback.

    The chart stores extremal states and Jacobians on a grid and re-integrates
    on demand for arbitrary points.
    """

    def __init__(
        self,
        system: SystemModel,
        q0: Sequence[float],
        u0: float,
        eps: int | None = None,
        x1_range: tuple[float, float] = (-0.1, 0.1),
        x2_range: tuple[float, float] = (-0.1, 0.1),
        u_range: tuple[float, float] = (-0.5, 0.5),
        resolution: int = 5,
        base: str = "control",
        max_step: float = MAX_STEP,
        distortion: Callable[[float, float], tuple[np.ndarray, np.ndarray]] | None = None,
    ):
        if resolution < 2:
            raise ValueError("resolution must be at least 2")
        for lo, hi in (x1_range, x2_range, u_range):
            if not lo <= 0.0 <= hi or lo == hi:
                raise ValueError("chart ranges must contain 0 in their interior or boundary")
        self.system = system
        self.q0 = np.array(q0, dtype=float)
        self.u0 = float(u0)
        red = system_reduced(system, q0[0], q0[1], u0, 0, eps)
        self.epsilon = red.epsilon
        self.x1_range, self.x2_range, self.u_range = tuple(x1_range), tuple(x2_range), tuple(u_range)
        self.resolution = resolution
        self.base_mode = base
        self.max_step = max_step
        self.distortion = distortion
        self.h_field = ExtremalField(system, self.epsilon)
        self.base_field = _oriented(system, _base_field(system, self.epsilon, base), q0, u0)
        self.x1s = _grid_with_zero(x1_range, resolution)
        self.x2s = _grid_with_zero(x2_range, resolution)
        self.ws = _grid_with_zero(u_range, resolution)
        self.a_values: ASamples | None = None
        try:
            self._build_grid()
        except EvaluationFailed as exc:
            raise ChartSingular(f"chart box leaves the regular region: {exc}") from exc

    @property
    def chart_box(self) -> dict:
        return {"x1": list(self.x1_range), "x2": list(self.x2_range), "w": list(self.u_range)}

    # construction
    def _vertical_rhs(self, y: np.ndarray) -> np.ndarray:
        val, jac = self.h_field.value_and_jacobian(y[:3])
        return np.concatenate([val, jac @ y[3:]])

    def _start(self, z_base: np.ndarray) -> np.ndarray:
        return np.concatenate([z_base, self.base_field(z_base)])

    def _build_grid(self) -> None:
        z0 = np.array([self.q0[0], self.q0[1], self.u0])
        self._base = _sweep(self.base_field, z0, self.x1s, self.max_step)
        for x1, zb in zip(self.x1s, self._base):
            self._check_legendrian(x1, zb)
        n1, n2 = len(self.x1s), len(self.x2s)
        self._grid = np.zeros((n1, n2, 6))
        for i in range(n1):
            self._grid[i] = _sweep(self._vertical_rhs, self._start(self._base[i]), self.x2s, self.max_step)
        self._grid_q = np.empty((n1, n2, 2))
        for i in range(n1):
            for j in range(n2):
                cp = self._chart_point(self._grid[i, j], self.x1s[i], self.x2s[j])
                self._grid_q[i, j] = cp.q
                if abs(np.linalg.det(cp.jacobian)) < 1e-8:
                    raise ChartSingular(f"chart Jacobian degenerates at x=({self.x1s[i]}, {self.x2s[j]})")

    def _check_legendrian(self, x1: float, zb: np.ndarray) -> None:
        """The extremal control on N0 must make f_u parallel to the tangent of N0."""
        g = self.base_field(zb)[:2]
        s1, s2 = self.system.u_series(zb[0], zb[1], zb[2], 1)
        fu = np.array([s1.c[1], s2.c[1]])
        d = g[0] * fu[1] - g[1] * fu[0]
        if abs(d) > 1e-8 * np.linalg.norm(g) * np.linalg.norm(fu):
            raise RootFailed(f"no extremal control annihilating the tangent of N0 at x1={x1}")

    def _chart_point(self, y: np.ndarray, x1: float, x2: float) -> ChartPoint:
        z, w = y[:3], y[3:]
        f = self.system(z[0], z[1], z[2])
        jac = np.column_stack([w[:2], f])
        q = z[:2].copy()
        if self.distortion is not None:
            dq, djac = self.distortion(x1, x2)
            q = q + dq
            jac = jac + djac
        return ChartPoint(q, float(z[2]), jac)

    def point(self, x1: float, x2: float) -> ChartPoint:
        """Chart data at (x1, x2), re-integrated from the nearest stored base node."""
        try:
            i = int(np.argmin(np.abs(self.x1s - x1)))
            zb = _advance(self.base_field, self._base[i], x1 - self.x1s[i], self.max_step)
            y = _advance(self._vertical_rhs, self._start(zb), x2, self.max_step)
        except EvaluationFailed as exc:
            raise ChartSingular(f"point ({x1}, {x2}) is outside the regular region: {exc}") from exc
        return self._chart_point(y, x1, x2)

    def grid_point(self, i: int, j: int) -> ChartPoint:
        return self._chart_point(self._grid[i, j], self.x1s[i], self.x2s[j])

    def phi(self, x1: float, x2: float) -> np.ndarray:
        return self.point(x1, x2).q

    def phi_inverse(self, q: Sequence[float], guess: Sequence[float] | None = None, tol: float = 1e-13) -> np.ndarray:
        """Damped Newton on phi(x) = q."""
        q = np.asarray(q, dtype=float)
        if guess is None:
            d = np.linalg.norm(self._grid_q - q, axis=2)
            i, j = np.unravel_index(int(np.argmin(d)), d.shape)
            x = np.array([self.x1s[i], self.x2s[j]])
        else:
            x = np.array(guess, dtype=float)
        cp = self.point(*x)
        r = cp.q - q
        for _ in range(50):
            if np.max(np.abs(r)) < tol * max(1.0, float(np.max(np.abs(q)))):
                return x
            step = np.linalg.solve(cp.jacobian, r)
            lam = 1.0
            while lam > 1e-4:
                trial = x - lam * step
                cp_t = self.point(*trial)
                r_t = cp_t.q - q
                if np.linalg.norm(r_t) < np.linalg.norm(r):
                    break
                lam *= 0.5
            x, cp, r = trial, cp_t, r_t
        if np.max(np.abs(r)) < 1e-10:
            return x
        raise NewtonFailed(f"could not invert the chart at q={tuple(q)}")

    # pushed system
    def pushed(self, x1: float, x2: float, u: float, cp: ChartPoint | None = None) -> np.ndarray:
        """f~(x, u) = Dphi(x)^{-1} f(phi(x), u), the system in chart coordinates before feedback."""
        cp = cp or self.point(x1, x2)
        return np.linalg.solve(cp.jacobian, self.system(cp.q[0], cp.q[1], u))

    def feedback(self, x1: float, x2: float, u: float, cp: ChartPoint | None = None) -> float:
        return float(self.pushed(x1, x2, u, cp)[0])

    def control_for(self, x1: float, x2: float, w: float, cp: ChartPoint | None = None) -> float:
        """Original control u with f~1(x, u) = w, continued from the extremal control."""
        cp = cp or self.point(x1, x2)
        jinv = np.linalg.inv(cp.jacobian)
        u = cp.u_extremal
        for _ in range(60):
            s1, s2 = self.system.u_series(cp.q[0], cp.q[1], u, 1)
            g = jinv[0, 0] * s1.c[0] + jinv[0, 1] * s2.c[0] - w
            dg = jinv[0, 0] * s1.c[1] + jinv[0, 1] * s2.c[1]
            if dg == 0:
                break
            step = g / dg
            u -= step
            if abs(step) < 1e-15 * max(1.0, abs(u)):
                return u
        s1, s2 = self.system.u_series(cp.q[0], cp.q[1], u, 0)
        if abs(jinv[0, 0] * s1.c[0] + jinv[0, 1] * s2.c[0] - w) < 1e-12:
            return u
        raise NewtonFailed(f"feedback is not invertible at x=({x1}, {x2}), w={w}")

    def normal_f2(self, x1: float, x2: float, w: float, cp: ChartPoint | None = None) -> float:
        cp = cp or self.point(x1, x2)
        u = self.control_for(x1, x2, w, cp)
        return float(self.pushed(x1, x2, u, cp)[1])

    def series(self, x1: float, x2: float, order: int = SERIES_ORDER, cp: ChartPoint | None = None) -> Taylor:
        """Taylor series of f^2(x, w) in w around w = 0."""
        cp = cp or self.point(x1, x2)
        u = self.control_for(x1, x2, 0.0, cp)
        jinv = np.linalg.inv(cp.jacobian)
        s1, s2 = self.system.u_series(cp.q[0], cp.q[1], u, order)
        g1 = s1 * jinv[0, 0] + s2 * jinv[0, 1]
        g2 = s1 * jinv[1, 0] + s2 * jinv[1, 1]
        w = Taylor.variable(0.0, 0, 1, order)
        c = g1.c[1]
        s = w / c
        for _ in range(order + 1):
            s = s + (w - g1.compose([s])) / c
        return g2.compose([s])

    def a_at(self, x1: float, x2: float, w: float, cp: ChartPoint | None = None) -> float:
        cp = cp or self.point(x1, x2)
        eps = self.epsilon
        if abs(w) >= U_SWITCH:
            arg = eps * (1.0 - self.normal_f2(x1, x2, w, cp)) / (w * w)
        else:
            d = self.series(x1, x2, cp=cp).c
            arg = -eps * sum(d[k] * w ** (k - 2) for k in range(2, len(d)))
        if not arg > 0:
            raise NonPositiveArgument(f"log argument {arg} at x=({x1}, {x2}), w={w}; regularity fails or eps is wrong")
        return 0.5 * math.log(arg)

    # Taylor-mode chart for exact derivatives
    def pushed_taylor(self, x1: float, x2: float, w: float = 0.0, order: int = 4) -> tuple[Taylor, Taylor]:
        """Jets in (x1, x2, w) of the normal-form system (f^1, f^2) = (w, f^2(x, w)).

        The chart map is differentiated exactly by carrying Taylor series
        through the base-curve and extremal flows.
        """
        if self.distortion is not None:
            raise ControlGeometryError("Taylor-mode evaluation is unavailable for distorted charts")
        K = order + 1
        i = int(np.argmin(np.abs(self.x1s - x1)))
        zb = _advance(self.base_field, self._base[i], x1 - self.x1s[i], self.max_step)
        # base curve as a series in dx1
        gamma = _picard(self.base_field, zb, nvars=1, var=0, order=K)
        # carry it along the extremal flow for time x2
        n = max(1, math.ceil(abs(x2) / self.max_step - 1e-9)) if x2 != 0 else 0
        Z = gamma
        if n:
            hstep = x2 / n
            fn = lambda S: _field_on_series(self.h_field, S)  # noqa: E731
            for _ in range(n):
                Z = _rk4_series(fn, Z, hstep)
        # extend in dx2 by Picard iteration of the extremal field
        Z2 = [c.lift(2, [0]) for c in Z]
        Phi = _picard(self.h_field, None, nvars=2, var=1, order=K, initial=Z2)
        return self._normalize(Phi, w, order)

    def _normalize(self, Phi, w: float, order: int) -> tuple[Taylor, Taylor]:
        qc = np.array([Phi[0].value, Phi[1].value])
        J = [[Phi[r].diff(c).lift(3, [0, 1]) for c in (0, 1)] for r in (0, 1)]
        Jc = np.array([[J[r][c].value for c in (0, 1)] for r in (0, 1)])
        u_b = self._control_for_point(qc, Jc, Phi[2].value, w)
        d1 = (Phi[0] - qc[0]).truncate(order).lift(3, [0, 1])
        d2 = (Phi[1] - qc[1]).truncate(order).lift(3, [0, 1])
        du = Taylor.variable(0.0, 2, 3, order)
        G1, G2 = self.system.taylor(qc[0], qc[1], u_b, order)
        F1, F2 = G1.compose([d1, d2, du]), G2.compose([d1, d2, du])
        det = J[0][0] * J[1][1] - J[0][1] * J[1][0]
        T1 = (J[1][1] * F1 - J[0][1] * F2) / det
        T2 = (J[0][0] * F2 - J[1][0] * F1) / det
        X1, X2, W = Taylor.seed([0.0, 0.0, 0.0], order)
        c = T1.coeff((0, 0, 1))
        D = W / c
        for _ in range(order + 1):
            D = D + (W + w - T1.compose([X1, X2, D])) / c
        H2 = T2.compose([X1, X2, D])
        H1 = Taylor.variable(w, 2, 3, order)
        return H1, H2

    def _control_for_point(self, q, J, u_ext: float, w: float) -> float:
        jinv = np.linalg.inv(J)
        u = u_ext
        for _ in range(60):
            s1, s2 = self.system.u_series(q[0], q[1], u, 1)
            g = jinv[0, 0] * s1.c[0] + jinv[0, 1] * s2.c[0] - w
            dg = jinv[0, 0] * s1.c[1] + jinv[0, 1] * s2.c[1]
            step = g / dg
            u -= step
            if abs(step) < 1e-15 * max(1.0, abs(u)):
                break
        return u

    def curvature_at(self, x1: float, x2: float, w: float = 0.0) -> float:
        """Curvature of the pushed normal-form system at (x1, x2, w)."""
        H1, H2 = self.pushed_taylor(x1, x2, w, 4)
        return curvature_from_taylor(H1, H2, self.epsilon)[0]

    def curvature_from_a(self, x1: float, x2: float) -> float:
        """-a_{x2x2} - a_{x2}^2 at w = 0, with a differentiated through the Taylor-mode chart."""
        _, H2 = self.pushed_taylor(x1, x2, 0.0, 4)
        c = np.array([H2.coeff((i, j, 2)) if i + j <= 2 else 0.0 for i in range(3) for j in range(3)]).reshape(3, 3)
        d2 = Taylor.from_partials(
            {(i, j): c[i, j] * math.factorial(i) * math.factorial(j) for i in range(3) for j in range(3) if i + j <= 2},
            2,
            2,
        )
        a = (d2 * (-self.epsilon)).log() * 0.5
        return -a.partial((0, 2)) - a.partial((0, 1)) ** 2


def _grid_with_zero(rng: tuple[float, float], n: int) -> np.ndarray:
    g = np.linspace(rng[0], rng[1], n)
    if not np.any(g == 0.0):
        g = np.sort(np.append(g, 0.0))
    return g


def _field_on_series(field: VectorField3, S: Sequence[Taylor]) -> list[Taylor]:
    base = [s.value for s in S]
    ft = field.taylor(base, S[0].order)
    deltas = [s.nilpotent() for s in S]
    return [c.compose(deltas) + 0.0 for c in ft]


def _rk4_series(fn, Z: Sequence[Taylor], h: float) -> list[Taylor]:
    k1 = fn(Z)
    k2 = fn([z + k * (0.5 * h) for z, k in zip(Z, k1)])
    k3 = fn([z + k * (0.5 * h) for z, k in zip(Z, k2)])
    k4 = fn([z + k * h for z, k in zip(Z, k3)])
    return [z + (a + b * 2.0 + c * 2.0 + d) * (h / 6.0) for z, a, b, c, d in zip(Z, k1, k2, k3, k4)]


def _picard(field: VectorField3, z0, nvars: int, var: int, order: int, initial=None) -> list[Taylor]:
    """Series solution of dZ/dx_var = field(Z) with Z|_{x_var=0} = initial (or the point z0)."""
    if initial is None:
        initial = [Taylor.constant(float(x), nvars, order) for x in z0]
    base = [c.value for c in initial]
    ft = field.taylor(base, order)
    Z = [c.copy() for c in initial]
    for _ in range(order + 1):
        deltas = [(z - b) for z, b in zip(Z, base)]
        rhs = [c.compose(deltas) for c in ft]
        Z = [z0_ + r.integrate(var) for z0_, r in zip(initial, rhs)]
    return Z


def build_chart(
    system: SystemModel,
    q0: Sequence[float],
    u0: float,
    eps: int | None = None,
    x1_range: tuple[float, float] = (-0.1, 0.1),
    x2_range: tuple[float, float] = (-0.1, 0.1),
    u_range: tuple[float, float] = (-0.5, 0.5),
    resolution: int = 5,
    base: str = "control",
    max_step: float = MAX_STEP,
) -> NormalFormChart:
    """Chart around the extremal through (q0, u0); u0 is the control of the vertical extremal."""
    return NormalFormChart(system, q0, u0, eps, x1_range, x2_range, u_range, resolution, base, max_step)


def extract_a(chart: NormalFormChart) -> ASamples:
    """Sample a(x1, x2, w) on the chart grid."""
    vals = np.empty((len(chart.x1s), len(chart.x2s), len(chart.ws)))
    for i, x1 in enumerate(chart.x1s):
        for j, x2 in enumerate(chart.x2s):
            cp = chart.grid_point(i, j)
            for k, w in enumerate(chart.ws):
                vals[i, j, k] = chart.a_at(x1, x2, w, cp)
    chart.a_values = ASamples(chart.x1s, chart.x2s, chart.ws, vals)
    return chart.a_values


@dataclass
class NormalFormReport:
    residuals: dict
    tolerance: float
    epsilon: int
    a_origin: float
    passed: bool
    notes: list[str] = field(default_factory=list)

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_json(self) -> str:
        data = asdict(self)
        data["status"] = self.status
        return json.dumps(data, indent=2)


def verify_normal_form(chart: NormalFormChart, tol: float = 1e-5) -> NormalFormReport:
    """Grid residuals of the normal-form identities; PASS iff all are below ``tol``."""
    samples = chart.a_values or extract_a(chart)
    eps = chart.epsilon
    feedback = f2_zero = df2_zero = form = 0.0
    for i, x1 in enumerate(chart.x1s):
        for j, x2 in enumerate(chart.x2s):
            cp = chart.grid_point(i, j)
            d = chart.series(x1, x2, cp=cp).c
            f2_zero = max(f2_zero, abs(d[0] - 1.0))
            df2_zero = max(df2_zero, abs(d[1]))
            for k, w in enumerate(chart.ws):
                u = chart.control_for(x1, x2, w, cp)
                ft = chart.pushed(x1, x2, u, cp)
                feedback = max(feedback, abs(ft[0] - w))
                a = samples.values[i, j, k]
                form = max(form, abs(ft[1] - (1.0 - eps * math.exp(2 * a) * w * w)))
    origin = float(np.max(np.abs(chart.grid_point(*_origin_index(chart)).q - chart.q0)))
    residuals = {
        "feedback": float(feedback),
        "f2_at_zero": float(f2_zero),
        "df2_at_zero": float(df2_zero),
        "normal_form": float(form),
        "origin": origin,
    }
    i0, j0 = _origin_index(chart)
    k0 = int(np.flatnonzero(chart.ws == 0.0)[0])
    passed = all(v < tol for v in residuals.values())
    notes = [] if passed else [f"{k} residual {v:.3e} exceeds {tol:.1e}" for k, v in residuals.items() if v >= tol]
    return NormalFormReport(residuals, tol, eps, float(samples.values[i0, j0, k0]), passed, notes)


def _origin_index(chart: NormalFormChart) -> tuple[int, int]:
    return int(np.flatnonzero(chart.x1s == 0.0)[0]), int(np.flatnonzero(chart.x2s == 0.0)[0])


def dump_chart(chart: NormalFormChart, report: NormalFormReport, directory: str) -> None:
    """Write grid.csv, a_samples.csv and report.json into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    rows = ["x1,x2,q1,q2"]
    for i, x1 in enumerate(chart.x1s):
        for j, x2 in enumerate(chart.x2s):
            q = chart.grid_point(i, j).q
            rows.append(f"{x1:.17g},{x2:.17g},{q[0]:.17g},{q[1]:.17g}")
    atomic_write(os.path.join(directory, "grid.csv"), "\n".join(rows) + "\n")
    s = chart.a_values or extract_a(chart)
    rows = ["x1,x2,u,a"]
    for i, x1 in enumerate(s.x1):
        for j, x2 in enumerate(s.x2):
            for k, w in enumerate(s.w):
                rows.append(f"{x1:.17g},{x2:.17g},{w:.17g},{s.values[i, j, k]:.17g}")
    atomic_write(os.path.join(directory, "a_samples.csv"), "\n".join(rows) + "\n")
    meta = json.loads(report.to_json())
    meta.update(
        {
            "q0": chart.q0.tolist(),
            "u0": chart.u0,
            "base_curve": chart.base_mode,
            "chart_box": chart.chart_box,
            "resolution": chart.resolution,
        }
    )
    atomic_write(os.path.join(directory, "report.json"), json.dumps(meta, indent=2) + "\n")


# -- abnormal extremals -------------------------------------------------------------------

@dataclass
class AbnormalExtension:
    q: StatePoint
    kappa_limit: float
    series_value: float
    controls: list[float]
    kappas: list[float]
    extrapolation_error: float


def abnormal_extension(
    system: SystemModel,
    q: StatePoint,
    delta: float = 0.2,
    levels: int = 3,
    tol: float = 1e-4,
    max_levels: int = 8,
) -> AbnormalExtension:
    """Richardson limit of kappa(q, u) as u -> 1 from below, against the closed form.

    Controls u_k = 1 - 2^{-k} delta.  The first estimate uses ``levels``
    points; while successive diagonal estimates differ by more than ``tol``
    another halving is added, up to ``max_levels`` points.
    """
    if getattr(system, "params", {}).get("family") != "abnormal_form":
        raise WrongFamily("abnormal_extension needs an abnormal_form system")
    controls: list[float] = []
    kappas: list[float] = []
    rows: list[list[float]] = []
    err = math.inf
    for k in range(max(levels, max_levels)):
        u = 1.0 - delta * 2.0**-k
        kappa = curvature_at(system, q, u).kappa
        controls.append(u)
        kappas.append(kappa)
        row = [kappa]
        for m in range(1, k + 1):
            row.append((2**m * row[m - 1] - rows[k - 1][m - 1]) / (2**m - 1))
        rows.append(row)
        if k >= 1:
            err = abs(row[k] - rows[k - 1][k - 1])
        if k + 1 >= levels and err <= tol:
            break
    if err > tol:
        raise NoConvergence(f"Richardson extrapolation did not settle (difference {err:.3e})")
    limit = rows[-1][-1]
    return AbnormalExtension(q, float(limit), curvature_series_abnormal(system, q), controls, kappas, float(err))
