"""Control curvature from the commutator identity [h, [v, h]] = kappa * v."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as _expr
from .errors import InversionFailed, VerticalityViolated, WrongFamily
from .extremal import VectorField3, extremal_field, reduce_taylor, vertical_field
from .system import ControlDomain, StatePoint, SystemModel
from .taylor import Taylor

VERTICALITY_RTOL = 1e-6
VERTICALITY_ATOL = 1e-12


def bracket_taylor(X: Sequence[Taylor], Y: Sequence[Taylor]) -> tuple[Taylor, Taylor, Taylor]:
    """[X, Y] = (dY/dxi) X - (dX/dxi) Y on Taylor jets; output order drops by one."""
    out = []
    for i in range(3):
        acc = None
        for j in range(3):
            term = Y[i].diff(j) * X[j] - X[i].diff(j) * Y[j]
            acc = term if acc is None else acc + term
        out.append(acc)
    return tuple(out)


class BracketField(VectorField3):
    def __init__(self, X: VectorField3, Y: VectorField3):
        self.X, self.Y = X, Y

    def taylor(self, point, order):
        return bracket_taylor(self.X.taylor(point, order + 1), self.Y.taylor(point, order + 1))


def lie_bracket(X: VectorField3, Y: VectorField3) -> BracketField:
    return BracketField(X, Y)


@dataclass(frozen=True)
class CurvatureSample:
    q: StatePoint
    u: float
    kappa: float
    verticality_residual: float
    double_bracket: tuple[float, float, float] = (0.0, 0.0, 0.0)
    epsilon: int = 1


def double_bracket_from_taylor(F1: Taylor, F2: Taylor, eps: int | None = None, flip_vertical: bool = False):
    """[h, [v, h]] and v at the base point of order-4 jets of f."""
    red = reduce_taylor(F1, F2, eps)
    h = red.h
    v = tuple(-c for c in red.v) if flip_vertical else red.v
    inner = bracket_taylor(v, h)
    outer = bracket_taylor(tuple(c.truncate(1) for c in h), inner)
    return np.array([c.value for c in outer]), np.array([c.value for c in v]), red.epsilon


def curvature_from_taylor(F1: Taylor, F2: Taylor, eps: int | None = None, flip_vertical: bool = False) -> tuple[float, float, np.ndarray, int]:
    B, v, eps = double_bracket_from_taylor(F1, F2, eps, flip_vertical)
    return float(B[2] / v[2]), _verticality(B), B, eps


def _verticality(B: np.ndarray) -> float:
    side = max(abs(B[0]), abs(B[1]))
    return side / abs(B[2]) if B[2] != 0 else side


def curvature_at(
    system: SystemModel,
    q: StatePoint,
    u: float,
    eps: int | None = None,
    flip_vertical: bool = False,
    check: bool = True,
) -> CurvatureSample:
    """Control curvature at (q, u) of the level set eps (auto-detected when None)."""
    F1, F2 = system.taylor(q.q1, q.q2, u, 4)
    B, v, eps = double_bracket_from_taylor(F1, F2, eps, flip_vertical)
    if check and max(abs(B[0]), abs(B[1])) > VERTICALITY_RTOL * abs(B[2]) + VERTICALITY_ATOL:
        raise VerticalityViolated(
            f"double bracket has horizontal part {B[:2]} against vertical {B[2]} at q=({q.q1}, {q.q2}), u={u}"
        )
    return CurvatureSample(q, u, float(B[2] / v[2]), _verticality(B), tuple(float(x) for x in B), eps)


def curvature_fd(system: SystemModel, q: StatePoint, u: float, eps: int | None = None, step: float = 1e-3) -> float:
    """Same double bracket from field values only, by nested central differences.

    Used as an independent cross-check of the jet-based computation.
    """
    if eps is None:
        eps = reduce_taylor(*system.taylor(q.q1, q.q2, u, 2)).epsilon
    hf = extremal_field(system, eps)
    vf = vertical_field(system, eps)

    def jac(fn, p):
        cols = []
        for j in range(3):
            e = np.zeros(3)
            e[j] = step
            cols.append((fn(p + e) - fn(p - e)) / (2 * step))
        return np.array(cols).T

    def inner(p):
        return jac(hf, p) @ vf(p) - jac(vf, p) @ hf(p)

    p0 = np.array([q.q1, q.q2, u])
    B = jac(inner, p0) @ hf(p0) - jac(hf, p0) @ inner(p0)
    return float(B[2] / vf(p0)[2])


# -- closed-form oracles ---------------------------------------------------------

def _a_partials(a_node, q1: float, q2: float, u: float) -> dict:
    x1, x2, w = Taylor.seed([q1, q2, u], 2)
    val = _expr.evaluate(a_node, {"q1": x1, "q2": x2, "u": w})
    if not isinstance(val, Taylor):
        val = Taylor.constant(float(val), 3, 2)
    return val.partials()


def curvature_series_normal(system: SystemModel, q: StatePoint, u: float) -> float:
    """Closed-form curvature of the normal-form family q1' = u, q2' = 1 - eps e^{2a} u^2.

    For a state-only function a the full cubic polynomial in u is returned;
    when a depends on u only the leading value at u = 0 is available and is
    returned whatever ``u`` is.
    """
    params = getattr(system, "params", {})
    if params.get("family") != "normal_form":
        raise WrongFamily("curvature_series_normal needs a normal_form system")
    a_node = _expr.parse_expression(params["a"])
    eps = params.get("eps", 1)
    if "u" in _expr.free_variables(a_node):
        p = _a_partials(a_node, q.q1, q.q2, 0.0)
        return -p[(0, 2, 0)] - p[(0, 1, 0)] ** 2
    p = _a_partials(a_node, q.q1, q.q2, 0.0)
    e2a = math.exp(2 * p[(0, 0, 0)])
    return (
        -p[(0, 2, 0)]
        - p[(0, 1, 0)] ** 2
        - 3 * eps * e2a * p[(0, 2, 0)] * u**2
        - eps * e2a * p[(1, 1, 0)] * u**3
    )


def curvature_series_abnormal(system: SystemModel, q: StatePoint) -> float:
    """-a_{q1q1}(q, 1) - a_{q1}(q, 1)^2 for the abnormal-form family."""
    params = getattr(system, "params", {})
    if params.get("family") != "abnormal_form":
        raise WrongFamily("curvature_series_abnormal needs an abnormal_form system")
    p = _a_partials(_expr.parse_expression(params["a"]), q.q1, q.q2, 1.0)
    return -p[(2, 0, 0)] - p[(1, 0, 0)] ** 2


def gaussian_curvature_conformal(phi: str, q: StatePoint) -> float:
    """Gaussian curvature of the metric e^{2 phi}(dq1^2 + dq2^2): -e^{-2 phi} (phi_11 + phi_22)."""
    p = _a_partials(_expr.parse_expression(phi), q.q1, q.q2, 0.0)
    return -math.exp(-2 * p[(0, 0, 0)]) * (p[(2, 0, 0)] + p[(0, 2, 0)])


# -- feedback transformations -----------------------------------------------------

@dataclass
class FeedbackTransform:
    """(q, u) -> (phi(q), psi(q, u)) given by expressions."""

    phi1: str
    phi2: str
    psi: str
    box: tuple[float, float, float, float] | None = None
    urange: tuple[float, float] | None = None
    _nodes: tuple = field(init=False, repr=False)

    def __post_init__(self):
        self._nodes = tuple(_expr.parse_expression(s) for s in (self.phi1, self.phi2, self.psi))

    def _eval(self, k: int, q1, q2, u=0.0):
        return _expr.evaluate(self._nodes[k], {"q1": q1, "q2": q2, "u": u})

    def phi(self, q: Sequence[float]) -> np.ndarray:
        return np.array([float(self._eval(0, q[0], q[1])), float(self._eval(1, q[0], q[1]))])

    def dphi(self, q: Sequence[float]) -> np.ndarray:
        x1, x2, w = Taylor.seed([q[0], q[1], 0.0], 1)
        rows = []
        for k in (0, 1):
            t = _lift_const(self._eval(k, x1, x2, w), 1)
            rows.append([t.coeff((1, 0, 0)), t.coeff((0, 1, 0))])
        return np.array(rows)

    def psi_value(self, q: Sequence[float], u: float) -> float:
        return float(self._eval(2, q[0], q[1], u))

    def psi_u(self, q: Sequence[float], u: float) -> float:
        w = Taylor.variable(u, 0, 1, 1)
        return _lift_const(self._eval(2, q[0], q[1], w), 1, nvars=1).coeff((1,))

    def inverse_state(self, x: Sequence[float], guess: Sequence[float] | None = None) -> np.ndarray:
        y = np.array(x if guess is None else guess, dtype=float)
        x = np.asarray(x, dtype=float)
        for _ in range(60):
            r = self.phi(y) - x
            if np.max(np.abs(r)) < 1e-14 * max(1.0, float(np.max(np.abs(x)))):
                return y
            try:
                step = np.linalg.solve(self.dphi(y), r)
            except np.linalg.LinAlgError:
                break
            y = y - step
            if not np.all(np.isfinite(y)):
                break
        r = self.phi(y) - x
        if np.max(np.abs(r)) < 1e-11:
            return y
        raise InversionFailed(f"could not invert phi at {tuple(x)}")

    def inverse_control(self, q: Sequence[float], w: float, guess: float | None = None) -> float:
        u = w if guess is None else guess
        for _ in range(60):
            r = self.psi_value(q, u) - w
            if abs(r) < 1e-14 * max(1.0, abs(w)):
                return u
            d = self.psi_u(q, u)
            if d == 0:
                break
            u -= r / d
            if not math.isfinite(u):
                break
        if abs(self.psi_value(q, u) - w) < 1e-11:
            return u
        raise InversionFailed(f"could not invert psi at q={tuple(q)}, w={w}")


def _lift_const(v, order, nvars=3) -> Taylor:
    return v if isinstance(v, Taylor) else Taylor.constant(float(v), nvars, order)


class TransformedSystem(SystemModel):
    """Push-forward f^(x, w) = Dphi(y) f(y, u) with y = phi^{-1}(x), u = psi^{-1}(y, w)."""

    def __init__(self, base: SystemModel, transform: FeedbackTransform, control_domain: ControlDomain, name: str | None = None):
        self.base = base
        self.transform = transform
        self.control_domain = control_domain
        self.name = name or f"{base.name}_transformed"
        self.provenance = "transformed"
        self.params = {}

    def taylor(self, x1, x2, w, order):
        T = self.transform
        y0 = T.inverse_state([x1, x2])
        u0 = T.inverse_control(y0, w)
        X1, X2, Wt = Taylor.seed([x1, x2, w], order)
        A_inv = np.linalg.inv(T.dphi(y0))
        Y1 = Taylor.constant(y0[0], 3, order)
        Y2 = Taylor.constant(y0[1], 3, order)
        for _ in range(order + 1):
            R1 = X1 - _lift_const(T._eval(0, Y1, Y2), order)
            R2 = X2 - _lift_const(T._eval(1, Y1, Y2), order)
            Y1 = Y1 + A_inv[0, 0] * R1 + A_inv[0, 1] * R2
            Y2 = Y2 + A_inv[1, 0] * R1 + A_inv[1, 1] * R2
        c = T.psi_u(y0, u0)
        Uj = Taylor.constant(u0, 3, order)
        for _ in range(order + 1):
            Uj = Uj + (Wt - _lift_const(T._eval(2, Y1, Y2, Uj), order)) / c
        deltas = (Y1 - y0[0], Y2 - y0[1], Uj - u0)
        G1, G2 = self.base.taylor(y0[0], y0[1], u0, order)
        F1, F2 = G1.compose(deltas), G2.compose(deltas)
        s1, s2, sw = Taylor.seed([y0[0], y0[1], 0.0], order + 1)
        dphi = []
        for k in (0, 1):
            comp = _lift_const(T._eval(k, s1, s2, sw), order + 1)
            dphi.append([comp.diff(0).compose(deltas[:2] + (Taylor.constant(0.0, 3, order),)),
                         comp.diff(1).compose(deltas[:2] + (Taylor.constant(0.0, 3, order),))])
        out1 = dphi[0][0] * F1 + dphi[0][1] * F2
        out2 = dphi[1][0] * F1 + dphi[1][1] * F2
        return out1, out2


def feedback_transform(system: SystemModel, T: FeedbackTransform, control_domain: ControlDomain | None = None) -> TransformedSystem:
    """Pushed-forward system; the control domain defaults to the image of T's working box."""
    if control_domain is None and T.box is not None and T.urange is not None:
        vals = [
            T.psi_value((a, b), u)
            for a in np.linspace(T.box[0], T.box[1], 3)
            for b in np.linspace(T.box[2], T.box[3], 3)
            for u in np.linspace(T.urange[0], T.urange[1], 5)
        ]
        control_domain = ControlDomain.interval(min(vals), max(vals))
    return TransformedSystem(system, T, control_domain or system.control_domain)


_PHI_MONOMIALS = ("1", "q1", "q2", "q1^2", "q1*q2", "q2^2")
_PSI_MONOMIALS = ("1", "q1", "q2", "u", "q1^2", "q1*q2", "q2^2", "q1*u", "q2*u", "u^2")


def _poly(base: str, monomials, coeffs) -> str:
    terms = [base] + [f"({float(c)!r})*{m}" if m != "1" else f"({float(c)!r})" for c, m in zip(coeffs, monomials)]
    return " + ".join(terms)


def random_feedback_transform(
    rng: np.random.Generator,
    box: tuple[float, float, float, float],
    urange: tuple[float, float],
    scale: float = 0.1,
    max_tries: int = 100,
    min_jacobian: float = 0.2,
) -> FeedbackTransform:
    """Degree-2 polynomial perturbation of the identity, rejection-sampled for invertibility on the box."""
    grid = [(a, b) for a in np.linspace(box[0], box[1], 5) for b in np.linspace(box[2], box[3], 5)]
    us = np.linspace(urange[0], urange[1], 5)
    for _ in range(max_tries):
        c_phi1 = rng.uniform(-scale, scale, len(_PHI_MONOMIALS))
        c_phi2 = rng.uniform(-scale, scale, len(_PHI_MONOMIALS))
        c_psi = rng.uniform(-scale, scale, len(_PSI_MONOMIALS))
        T = FeedbackTransform(
            _poly("q1", _PHI_MONOMIALS, c_phi1),
            _poly("q2", _PHI_MONOMIALS, c_phi2),
            _poly("u", _PSI_MONOMIALS, c_psi),
            box=tuple(box),
            urange=tuple(urange),
        )
        if _acceptable(T, grid, us, min_jacobian):
            return T
    raise InversionFailed("no invertible random transform found")


def _acceptable(T: FeedbackTransform, grid, us, min_jacobian: float) -> bool:
    for a, b in grid:
        if np.linalg.det(T.dphi([a, b])) < min_jacobian:
            return False
        for u in us:
            if T.psi_u([a, b], u) < min_jacobian:
                return False
        try:
            back = T.inverse_state(T.phi([a, b]), guess=[a, b])
        except InversionFailed:
            return False
        if np.max(np.abs(back - [a, b])) > 1e-10:
            return False
    return True
