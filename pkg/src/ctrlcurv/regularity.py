"""Pointwise and grid checks of the two regularity assumptions.

* strong convexity: det(f_u, f_uu) != 0
* transversality:   det(f, f_u)   != 0

Where both hold, f_uu decomposes in the basis {f, f_u} as
f_uu = -eps*alpha*f - beta*f_u with alpha > 0.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NonConvex, NoRoot, SingularBasis
from .system import StatePoint, SystemModel

ZERO_TOL = 1e-9


def _det(a, b):
    return a[0] * b[1] - a[1] * b[0]


def _vectors(system: SystemModel, q: StatePoint, u: float, order: int = 2):
    jet = system.evaluator(q, u, order)
    return [jet.vector((0, 0, k)) for k in range(order + 1)]


def is_zero_det(det: float, v1, v2, tol: float = ZERO_TOL) -> bool:
    """Scale-free zero test: |det| < tol * |v1| |v2|."""
    return abs(det) < tol * float(np.linalg.norm(v1) * np.linalg.norm(v2)) or (
        not np.any(v1) or not np.any(v2)
    )


def strong_convexity_residual(system: SystemModel, q: StatePoint, u: float) -> float:
    """det(df/du, d2f/du2) at (q, u)."""
    _, fu, fuu = _vectors(system, q, u)
    return float(_det(fu, fuu))


def transversality_residual(system: SystemModel, q: StatePoint, u: float) -> float:
    """det(f, df/du) at (q, u)."""
    f, fu = _vectors(system, q, u, 1)
    return float(_det(f, fu))


@dataclass(frozen=True)
class ConvexityData:
    alpha: float
    beta: float
    epsilon: int


def convexity_decomposition(system: SystemModel, q: StatePoint, u: float, tol: float = ZERO_TOL) -> ConvexityData:
    f, fu, fuu = _vectors(system, q, u)
    d0 = _det(f, fu)
    if is_zero_det(d0, f, fu, tol):
        raise SingularBasis(f"f and f_u are parallel at q=({q.q1}, {q.q2}), u={u}")
    d1 = _det(fu, fuu)
    if is_zero_det(d1, fu, fuu, tol):
        raise NonConvex(f"strong convexity fails at q=({q.q1}, {q.q2}), u={u}")
    signed_alpha = d1 / d0
    beta = -_det(f, fuu) / d0
    eps = 1 if signed_alpha > 0 else -1
    return ConvexityData(alpha=float(eps * signed_alpha), beta=float(beta), epsilon=eps)


@dataclass
class RegularityReport:
    strong_convexity_min: float
    transversality_min: float
    epsilon: int | str
    grid: dict
    strong_convexity_pass: bool = True
    transversality_pass: bool = True
    strong_convexity_failures: int = 0
    transversality_failures: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.strong_convexity_pass and self.transversality_pass

    @property
    def status(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_json(self) -> str:
        data = asdict(self)
        data["status"] = self.status
        return json.dumps(data, indent=2, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(type(x))


def control_grid(system: SystemModel, urange: tuple[float, float] | None, resolution: int) -> np.ndarray:
    dom = system.control_domain
    if urange is None:
        if dom.kind == "circle":
            return np.linspace(0.0, 2 * math.pi, resolution, endpoint=False)
        urange = (dom.min, dom.max)
    periodic = dom.kind == "circle" and math.isclose(urange[1] - urange[0], 2 * math.pi)
    return np.linspace(urange[0], urange[1], resolution, endpoint=not periodic)


def regularity_scan(
    system: SystemModel,
    box: tuple[float, float, float, float],
    urange: tuple[float, float] | None = None,
    resolution: int | tuple[int, int, int] = 5,
    tol: float = ZERO_TOL,
) -> RegularityReport:
    """Evaluate both assumptions on a grid over ``box`` = (q1min, q1max, q2min, q2max)."""
    res = (resolution,) * 3 if isinstance(resolution, int) else tuple(resolution)
    if min(res) < 2:
        raise ValueError("resolution must be at least 2 per axis")
    q1s = np.linspace(box[0], box[1], res[0])
    q2s = np.linspace(box[2], box[3], res[1])
    us = control_grid(system, urange, res[2])
    sc_min = tr_min = math.inf
    sc_fail = tr_fail = 0
    eps_seen: set[int] = set()
    for a in q1s:
        for b in q2s:
            q = StatePoint(float(a), float(b))
            for u in us:
                f, fu, fuu = _vectors(system, q, float(u))
                d0, d1 = _det(f, fu), _det(fu, fuu)
                sc_min = min(sc_min, abs(d1))
                tr_min = min(tr_min, abs(d0))
                sc_bad = is_zero_det(d1, fu, fuu, tol)
                tr_bad = is_zero_det(d0, f, fu, tol)
                sc_fail += sc_bad
                tr_fail += tr_bad
                if not (sc_bad or tr_bad):
                    eps_seen.add(1 if d1 / d0 > 0 else -1)
    if len(eps_seen) == 1:
        eps: int | str = eps_seen.pop()
    else:
        eps = "mixed" if eps_seen else "undefined"
    notes = []
    if sc_fail:
        notes.append(f"strong convexity det(f_u, f_uu) vanishes at {sc_fail} grid points")
    if tr_fail:
        notes.append(f"transversality det(f, f_u) vanishes at {tr_fail} grid points (abnormal locus)")
    return RegularityReport(
        strong_convexity_min=float(sc_min),
        transversality_min=float(tr_min),
        epsilon=eps,
        grid={
            "box": [float(x) for x in box],
            "urange": [float(us[0]), float(us[-1])],
            "resolution": list(res),
        },
        strong_convexity_pass=sc_fail == 0,
        transversality_pass=tr_fail == 0,
        strong_convexity_failures=int(sc_fail),
        transversality_failures=int(tr_fail),
        notes=notes,
    )


def _abnormal_function(system: SystemModel, q: StatePoint, u: float) -> tuple[float, float, float]:
    """det(f, f_u), its u-derivative det(f, f_uu), and the scale |f||f_u|."""
    f, fu, fuu = _vectors(system, q, u)
    scale = float(np.linalg.norm(f) * np.linalg.norm(fu)) or 1.0
    return float(_det(f, fu)), float(_det(f, fuu)), scale


def abnormal_locus_find(
    system: SystemModel,
    q: StatePoint,
    u_guess: float,
    half_width: float = 0.1,
    expansions: int = 8,
    rtol: float = 1e-10,
) -> tuple[float, float]:
    """Root u_ab of u -> det(f, f_u)(q, u) near ``u_guess``.

    Brackets a sign change by doubling an interval around the guess, then
    runs Newton safeguarded by bisection.  Returns ``(u_ab, residual)``.
    """
    g = lambda u: _abnormal_function(system, q, u)  # noqa: E731

    lo = hi = None
    d = half_width
    for _ in range(expansions + 1):
        a, b = u_guess - d, u_guess + d
        ga, gb = g(a)[0], g(b)[0]
        if ga == 0.0:
            return a, 0.0
        if gb == 0.0:
            return b, 0.0
        if ga * gb < 0:
            lo, hi = (a, b)
            break
        d *= 2
    if lo is None:
        return _newton_only(g, u_guess, rtol)

    glo = g(lo)[0]
    u = 0.5 * (lo + hi)
    for _ in range(200):
        val, dval, scale = g(u)
        if abs(val) < rtol * scale:
            return u, val
        if (val < 0) == (glo < 0):
            lo, glo = u, val
        else:
            hi = u
        step = u - val / dval if dval != 0 else math.nan
        u = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo < 1e-15 * max(1.0, abs(u)):
            break
    val, _, scale = g(u)
    if abs(val) < rtol * scale:
        return u, val
    raise NoRoot(f"bisection stalled near u={u} with residual {val}")


def _newton_only(g, u: float, rtol: float) -> tuple[float, float]:
    for _ in range(50):
        val, dval, scale = g(u)
        if abs(val) < rtol * scale:
            return u, val
        if dval == 0 or not math.isfinite(dval):
            break
        u = u - val / dval
        if not math.isfinite(u) or abs(u) > 1e6:
            break
    raise NoRoot("det(f, f_u) has no sign change near the guess and Newton diverges")


@dataclass
class AbnormalLocus:
    samples: list[tuple[StatePoint, float]]
    residuals: list[float]


def abnormal_locus(system: SystemModel, states, u_guess: float) -> AbnormalLocus:
    """Per-state root solves of det(f, f_u) = 0.

    States without a root, or whose root violates strong convexity, are skipped.
    """
    samples, residuals = [], []
    for q in states:
        try:
            u_ab, res = abnormal_locus_find(system, q, u_guess)
        except NoRoot:
            continue
        _, fu, fuu = _vectors(system, q, u_ab)
        if is_zero_det(_det(fu, fuu), fu, fuu):
            continue
        samples.append((q, u_ab))
        residuals.append(res)
    return AbnormalLocus(samples, residuals)
