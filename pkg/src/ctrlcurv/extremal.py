"""Extremal flow of the maximum principle on the reduced level set.

The level set of the maximized Hamiltonian at value ``eps`` is parametrized
by (q1, q2, u): the covector lambda(q, u) is the unique solution of
<lambda, f> = eps, <lambda, f_u> = 0.  In these coordinates the extremal
field is (f1, f2, u') and the canonical vertical field is (0, 0, alpha^{-1/2}).
All quantities are computed on truncated Taylor series, so derivatives of
the fields of any order come out exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import expr as _expr
from .errors import (
    ControlGeometryError,
    EvaluationFailed,
    NonConvex,
    SingularBasis,
    StepUnderflow,
)
from .output import atomic_write, csv_text
from .regularity import ZERO_TOL
from .system import StatePoint, SystemModel
from .taylor import Taylor

Q1, Q2, U = 0, 1, 2


@dataclass(frozen=True)
class Covector:
    p1: float
    p2: float

    def pair(self, w) -> float:
        return self.p1 * w[0] + self.p2 * w[1]

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2])


@dataclass(frozen=True)
class ExtremalState:
    q: StatePoint
    u: float
    epsilon: int
    kind: str = "normal"


@dataclass
class Reduced:
    """Level-set quantities as Taylor series around one point of (q1, q2, u)."""

    epsilon: int
    lam: tuple[Taylor, Taylor]
    alpha: Taylor
    beta: Taylor
    h: tuple[Taylor, Taylor, Taylor]
    v: tuple[Taylor, Taylor, Taylor]


def _scaled_small(d: float, a: Sequence[float], b: Sequence[float], tol: float) -> bool:
    return abs(d) < tol * math.hypot(*a) * math.hypot(*b) or (not any(a) or not any(b))


def reduce_taylor(F1: Taylor, F2: Taylor, eps: int | None = None, tol: float = ZERO_TOL) -> Reduced:
    """Maximizing covector, convexity data and both fields from jets of f.

    Input jets of order N give output jets of order N - 2.
    """
    N = F1.order
    if N < 2:
        raise ValueError("need jets of order >= 2")
    Fu1, Fu2 = F1.diff(U), F2.diff(U)
    Fuu1, Fuu2 = Fu1.diff(U), Fu2.diff(U)
    D0 = F1 * Fu2 - F2 * Fu1
    D1 = Fu1 * Fuu2 - Fu2 * Fuu1
    f0 = (F1.value, F2.value)
    fu0 = (Fu1.value, Fu2.value)
    fuu0 = (Fuu1.value, Fuu2.value)
    if _scaled_small(D0.value, f0, fu0, tol):
        raise SingularBasis(f"f and f_u are parallel (det = {D0.value:.3e})")
    if _scaled_small(D1.value, fu0, fuu0, tol):
        raise NonConvex(f"strong convexity fails (det = {D1.value:.3e})")
    ratio = D1 / D0
    if eps is None:
        eps = 1 if ratio.value > 0 else -1
    alpha = ratio * eps
    if alpha.value <= 0:
        raise NonConvex(f"alpha = {alpha.value:.3e} is not positive for eps = {eps}")
    beta = -(F1 * Fuu2 - F2 * Fuu1) / D0
    scale = eps / D0
    lam1, lam2 = Fu2 * scale, -Fu1 * scale

    # u' from differentiating <lambda, f_u> = 0 along lambda' = -lambda df/dq
    Fq = ((F1.diff(Q1), F1.diff(Q2)), (F2.diff(Q1), F2.diff(Q2)))
    Fuq = ((Fu1.diff(Q1), Fu1.diff(Q2)), (Fu2.diff(Q1), Fu2.diff(Q2)))
    Fu = (Fu1, Fu2)
    F = (F1, F2)
    lam = (lam1, lam2)
    num = 0.0
    for m in range(2):
        fq_fu = Fq[m][0] * Fu[0] + Fq[m][1] * Fu[1]
        fuq_f = Fuq[m][0] * F[0] + Fuq[m][1] * F[1]
        num = num + lam[m] * (fq_fu - fuq_f)
    denom = lam1 * Fuu1 + lam2 * Fuu2
    udot = num / denom
    zero = Taylor.constant(0.0, 3, N - 2)
    h = (F1.truncate(N - 2), F2.truncate(N - 2), udot)
    v = (zero, zero, alpha.powr(-0.5))
    return Reduced(eps, (lam1.truncate(N - 2), lam2.truncate(N - 2)), alpha, beta, h, v)


def system_reduced(system: SystemModel, q1: float, q2: float, u: float, order: int, eps: int | None = None) -> Reduced:
    F1, F2 = system.taylor(q1, q2, u, order + 2)
    return reduce_taylor(F1, F2, eps)


# -- vector fields on (q1, q2, u) ---------------------------------------------

class VectorField3:
    """Vector field on (q1, q2, u)-space with Taylor-series access."""

    def taylor(self, point: Sequence[float], order: int) -> tuple[Taylor, Taylor, Taylor]:
        raise NotImplementedError

    def __call__(self, point: Sequence[float]) -> np.ndarray:
        return np.array([c.value for c in self.taylor(point, 0)])

    def jacobian(self, point: Sequence[float]) -> np.ndarray:
        """J[i, j] = d(component i)/d(coordinate j)."""
        comps = self.taylor(point, 1)
        return np.array([[c.coeff(_unit(j)) for j in range(3)] for c in comps])

    def value_and_jacobian(self, point: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        comps = self.taylor(point, 1)
        val = np.array([c.value for c in comps])
        jac = np.array([[c.coeff(_unit(j)) for j in range(3)] for c in comps])
        return val, jac


def _unit(j: int) -> tuple[int, int, int]:
    e = [0, 0, 0]
    e[j] = 1
    return tuple(e)


class ExtremalField(VectorField3):
    def __init__(self, system: SystemModel, eps: int | None = None):
        self.system = system
        self.eps = eps

    def taylor(self, point, order):
        return system_reduced(self.system, *point, order, self.eps).h


class VerticalField(VectorField3):
    def __init__(self, system: SystemModel, eps: int | None = None):
        self.system = system
        self.eps = eps

    def taylor(self, point, order):
        return system_reduced(self.system, *point, order, self.eps).v


class ExpressionField(VectorField3):
    """Field whose three components are expressions in q1, q2, u."""

    def __init__(self, c1: str, c2: str, c3: str):
        self.nodes = [_expr.parse_expression(c) for c in (c1, c2, c3)]

    def taylor(self, point, order):
        x1, x2, w = Taylor.seed(point, order)
        env = {"q1": x1, "q2": x2, "u": w}
        out = []
        for n in self.nodes:
            val = _expr.evaluate(n, env)
            out.append(val if isinstance(val, Taylor) else Taylor.constant(float(val), 3, order))
        return tuple(out)


class ScaledField(VectorField3):
    def __init__(self, field: VectorField3, factor: float):
        self.field = field
        self.factor = factor

    def taylor(self, point, order):
        return tuple(c * self.factor for c in self.field.taylor(point, order))


def extremal_field(system: SystemModel, eps: int | None = None) -> ExtremalField:
    return ExtremalField(system, eps)


def vertical_field(system: SystemModel, eps: int | None = None) -> VerticalField:
    return VerticalField(system, eps)


# -- pointwise quantities -------------------------------------------------------

def maximizing_covector(system: SystemModel, q: StatePoint, u: float, eps: int) -> Covector:
    """lambda with <lambda, f> = eps and <lambda, f_u> = 0."""
    jet = system.evaluator(q, u, 1)
    f, fu = jet.vector((0, 0, 0)), jet.vector((0, 0, 1))
    d0 = f[0] * fu[1] - f[1] * fu[0]
    if _scaled_small(d0, f, fu, ZERO_TOL):
        raise SingularBasis(f"f and f_u are parallel at q=({q.q1}, {q.q2}), u={u}")
    return Covector(eps * fu[1] / d0, -eps * fu[0] / d0)


@dataclass(frozen=True)
class FiberFrame:
    lam: Covector
    lam_u: Covector
    c0: float
    c1: float
    theta_rate: float
    b: float
    alpha: float
    beta: float
    alpha_u: float
    epsilon: int


def fiber_frame(system: SystemModel, q: StatePoint, u: float, eps: int | None = None) -> FiberFrame:
    """Frame {lambda, lambda_u} of the fiber curve u -> lambda(q, u) and its natural parameter.

    lambda_uu = c0*lambda + c1*lambda_u with c0 = -eps*alpha and
    c1 = alpha_u/alpha + beta.  In the natural parameter (dtheta = sqrt(alpha) du)
    the curve satisfies lambda'' = -eps*lambda + b*lambda' with
    b = (alpha_u/(2 alpha) + beta)/sqrt(alpha).
    """
    F1, F2 = system.taylor(q.q1, q.q2, u, 3)
    red = reduce_taylor(F1, F2, eps)
    eps = red.epsilon
    alpha = red.alpha.value
    alpha_u = red.alpha.coeff((0, 0, 1))
    beta = red.beta.value
    f = (F1.value, F2.value)
    d0 = F1.value * F2.coeff((0, 0, 1)) - F2.value * F1.coeff((0, 0, 1))
    lam = Covector(red.lam[0].value, red.lam[1].value)
    # <lam_u, f> = 0 and <lam_u, f_u> = alpha
    lam_u = Covector(-alpha * f[1] / d0, alpha * f[0] / d0)
    c0 = -eps * alpha
    c1 = alpha_u / alpha + beta
    rate = math.sqrt(alpha)
    b = (alpha_u / (2 * alpha) + beta) / rate
    return FiberFrame(lam, lam_u, c0, c1, rate, b, alpha, beta, alpha_u, eps)


# -- flows -------------------------------------------------------------------------

@dataclass
class Trajectory:
    t: np.ndarray
    states: np.ndarray

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]

    def write_csv(self, path) -> None:
        write_trajectory_csv(path, self.t, self.states)


def write_trajectory_csv(path, t, states, header=("t", "q1", "q2", "u")) -> None:
    atomic_write(path, csv_text(header, ([ti, *row] for ti, row in zip(t, states))))


def _rk4_step(fn: Callable[[np.ndarray], np.ndarray], y: np.ndarray, h: float) -> np.ndarray:
    k1 = fn(y)
    k2 = fn(y + 0.5 * h * k1)
    k3 = fn(y + 0.5 * h * k2)
    k4 = fn(y + h * k3)
    return y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _guarded(fn):
    def wrapped(y):
        try:
            out = fn(y)
        except ControlGeometryError as exc:
            raise EvaluationFailed(f"field evaluation failed at {tuple(y)}: {exc}") from exc
        if not np.all(np.isfinite(out)):
            raise EvaluationFailed(f"non-finite field value at {tuple(y)}")
        return out

    return wrapped


def integrate_ode(
    fn: Callable[[np.ndarray], np.ndarray],
    y0: Sequence[float],
    t_final: float,
    steps: int | None = None,
    adaptive: bool = False,
    tol: float = 1e-10,
) -> tuple[np.ndarray, np.ndarray]:
    """Classical RK4, fixed step (default t_final/1000) or adaptive by step doubling."""
    fn = _guarded(fn)
    y = np.asarray(y0, dtype=float)
    if t_final == 0.0:
        return np.array([0.0]), y[None, :].copy()
    if not adaptive:
        n = steps or 1000
        h = t_final / n
        ts, ys = [0.0], [y]
        for i in range(n):
            y = _rk4_step(fn, y, h)
            ts.append((i + 1) * h)
            ys.append(y)
        ts[-1] = t_final
        return np.array(ts), np.array(ys)

    h = t_final / (steps or 100)
    h_min = abs(t_final) * 1e-12
    t = 0.0
    ts, ys = [0.0], [y]
    sign = 1.0 if t_final > 0 else -1.0
    while sign * (t_final - t) > 0:
        if sign * (t + h - t_final) > 0:
            h = t_final - t
        full = _rk4_step(fn, y, h)
        half = _rk4_step(fn, _rk4_step(fn, y, h / 2), h / 2)
        err = float(np.max(np.abs(half - full))) / 15.0
        if err <= tol:
            t += h
            y = half + (half - full) / 15.0
            ts.append(t)
            ys.append(y)
            grow = 2.0 if err == 0 else min(2.0, 0.9 * (tol / err) ** 0.2)
            h *= grow
        else:
            h *= max(0.1, 0.9 * (tol / err) ** 0.2)
            if abs(h) < h_min:
                raise StepUnderflow(f"step size underflow at t={t}")
    ts[-1] = t_final
    return np.array(ts), np.array(ys)


def integrate_flow(
    field: VectorField3,
    start: Sequence[float],
    t_final: float,
    steps: int | None = None,
    adaptive: bool = False,
    tol: float = 1e-10,
) -> Trajectory:
    """Flow of ``field`` from ``start`` = (q1, q2, u) for time ``t_final``."""
    t, ys = integrate_ode(field, start, t_final, steps, adaptive, tol)
    return Trajectory(t, ys)


def flow_endpoint(field: VectorField3, start: Sequence[float], t_final: float, steps: int | None = None) -> np.ndarray:
    return integrate_flow(field, start, t_final, steps).end


# -- full (q, p) Hamiltonian system: independent check of the reduced field ---------

def _solve_control(system: SystemModel, q: np.ndarray, p: np.ndarray, u: float) -> float:
    """Newton for <p, f_u(q, u)> = 0 from a nearby control."""
    for _ in range(50):
        s1, s2 = system.u_series(q[0], q[1], u, 2)
        g = p[0] * s1.c[1] + p[1] * s2.c[1]
        dg = 2 * (p[0] * s1.c[2] + p[1] * s2.c[2])
        step = g / dg
        u -= step
        if abs(step) < 1e-15 * max(1.0, abs(u)):
            break
    return u


def integrate_pmp(
    system: SystemModel,
    q0: Sequence[float],
    u0: float,
    eps: int,
    t_final: float,
    steps: int = 1000,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrate q' = f(q, u), p' = -p df/dq with u from <p, f_u> = 0.

    Returns times and rows (q1, q2, p1, p2, u).
    """
    lam = maximizing_covector(system, StatePoint(*q0), u0, eps)
    guess = [u0]

    def rhs(y):
        q, p = y[:2], y[2:]
        u = _solve_control(system, q, p, guess[0])
        jet = system.evaluator(StatePoint(q[0], q[1]), u, 1)
        f = jet.vector((0, 0, 0))
        fq1, fq2 = jet.vector((1, 0, 0)), jet.vector((0, 1, 0))
        pdot = -np.array([p @ fq1, p @ fq2])
        return np.concatenate([f, pdot])

    y = np.array([q0[0], q0[1], lam.p1, lam.p2], dtype=float)
    h = t_final / steps
    ts, rows = [0.0], [np.append(y, u0)]
    for i in range(steps):
        y = _rk4_step(rhs, y, h)
        guess[0] = _solve_control(system, y[:2], y[2:], guess[0])
        ts.append((i + 1) * h)
        rows.append(np.append(y, guess[0]))
    return np.array(ts), np.array(rows)
