"""Control systems q' = f(q, u) on a two-dimensional state space with scalar input."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import numpy as np

from . import expr as _expr
from .errors import DefinitionError, DomainError, EvaluationFailed, UnknownFamily
from .taylor import Taylor

MAX_JET_ORDER = 4


@dataclass(frozen=True)
class StatePoint:
    q1: float
    q2: float

    def __post_init__(self):
        if not (math.isfinite(self.q1) and math.isfinite(self.q2)):
            raise ValueError(f"non-finite state ({self.q1}, {self.q2})")

    def as_array(self) -> np.ndarray:
        return np.array([self.q1, self.q2])


@dataclass(frozen=True)
class ControlDomain:
    kind: str
    min: float | None = None
    max: float | None = None

    def __post_init__(self):
        if self.kind == "interval":
            if self.min is None or self.max is None or not self.min < self.max:
                raise DomainError(f"interval control domain needs min < max, got ({self.min}, {self.max})")
        elif self.kind != "circle":
            raise DomainError(f"unknown control domain kind {self.kind!r}")

    @classmethod
    def circle(cls) -> "ControlDomain":
        return cls("circle")

    @classmethod
    def interval(cls, lo: float, hi: float) -> "ControlDomain":
        return cls("interval", float(lo), float(hi))

    def contains(self, u: float) -> bool:
        return self.kind == "circle" or self.min <= u <= self.max

    def to_json(self) -> dict:
        if self.kind == "circle":
            return {"kind": "circle"}
        return {"kind": "interval", "min": self.min, "max": self.max}

    @classmethod
    def from_json(cls, data: Any) -> "ControlDomain":
        if not isinstance(data, Mapping) or "kind" not in data:
            raise DomainError("control_domain must be an object with a 'kind' field")
        if data["kind"] == "circle":
            return cls.circle()
        if data["kind"] == "interval":
            try:
                return cls.interval(float(data["min"]), float(data["max"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise DomainError(f"invalid interval control domain: {exc}") from None
        raise DomainError(f"unknown control domain kind {data['kind']!r}")


@dataclass(frozen=True)
class Jet:
    """All partial derivatives of (f1, f2) at a point, up to total order ``order``.

    Multi-index ``(i, j, k)`` refers to d^i/dq1^i d^j/dq2^j d^k/du^k.
    """

    order: int
    f1: Taylor
    f2: Taylor

    def partial(self, component: int, index: tuple[int, int, int]) -> float:
        return (self.f1, self.f2)[component].partial(index)

    def vector(self, index: tuple[int, int, int]) -> np.ndarray:
        return np.array([self.f1.partial(index), self.f2.partial(index)])

    @property
    def partials(self) -> dict[tuple[int, int, int], np.ndarray]:
        p1, p2 = self.f1.partials(), self.f2.partials()
        return {m: np.array([p1[m], p2[m]]) for m in p1}

    def restrict(self, order: int) -> "Jet":
        return Jet(order, self.f1.truncate(order), self.f2.truncate(order))


class SystemModel:
    """Evaluator for f and its partial derivatives.

    Subclasses implement :meth:`taylor`; everything else derives from it.
    """

    name: str
    control_domain: ControlDomain
    provenance: str
    params: dict

    def taylor(self, q1: float, q2: float, u: float, order: int) -> tuple[Taylor, Taylor]:
        raise NotImplementedError

    def evaluator(self, q: StatePoint, u: float, order: int) -> Jet:
        if not 0 <= order <= MAX_JET_ORDER:
            raise ValueError(f"jet order must be within 0..{MAX_JET_ORDER}")
        f1, f2 = self.taylor(q.q1, q.q2, u, order)
        return Jet(order, f1, f2)

    def __call__(self, q1: float, q2: float, u: float) -> np.ndarray:
        f1, f2 = self.taylor(q1, q2, u, 0)
        return np.array([f1.value, f2.value])

    def u_series(self, q1: float, q2: float, u: float, order: int) -> tuple[Taylor, Taylor]:
        """Taylor series of f in the control alone (state frozen)."""
        f1, f2 = self.taylor(q1, q2, u, order)
        return _restrict_to_u(f1), _restrict_to_u(f2)


def _restrict_to_u(t: Taylor) -> Taylor:
    return Taylor(np.array([t.coeff((0, 0, k)) for k in range(t.order + 1)]), 1, t.order)


@dataclass(frozen=True, eq=False)
class ExpressionSystem(SystemModel):
    name: str
    f1_text: str
    f2_text: str
    control_domain: ControlDomain
    provenance: str = "parsed"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "_f1", _expr.parse_expression(self.f1_text))
        object.__setattr__(self, "_f2", _expr.parse_expression(self.f2_text))

    @property
    def f1(self) -> _expr.Node:
        return self._f1

    @property
    def f2(self) -> _expr.Node:
        return self._f2

    def _eval(self, env):
        try:
            return _expr.evaluate(self._f1, env), _expr.evaluate(self._f2, env)
        except (ZeroDivisionError, ValueError, OverflowError) as exc:
            raise EvaluationFailed(f"{self.name}: {exc}") from None

    def taylor(self, q1, q2, u, order):
        x1, x2, w = Taylor.seed([q1, q2, u], order)
        f1, f2 = self._eval({"q1": x1, "q2": x2, "u": w})
        return _as_taylor(f1, 3, order), _as_taylor(f2, 3, order)

    def __call__(self, q1, q2, u):
        f1, f2 = self._eval({"q1": float(q1), "q2": float(q2), "u": float(u)})
        return np.array([float(f1), float(f2)])

    def u_series(self, q1, q2, u, order):
        w = Taylor.variable(u, 0, 1, order)
        f1, f2 = self._eval({"q1": float(q1), "q2": float(q2), "u": w})
        return _as_taylor(f1, 1, order), _as_taylor(f2, 1, order)


def _as_taylor(v, nvars: int, order: int) -> Taylor:
    return v if isinstance(v, Taylor) else Taylor.constant(float(v), nvars, order)


# -- builtin families -------------------------------------------------------

def _check_expr(text: str, variables=_expr.VARIABLES) -> str:
    _expr.parse_expression(str(text), variables)
    return str(text)


def _conformal_frame(params: Mapping) -> ExpressionSystem:
    phi = _check_expr(params.get("phi", "0"))
    return ExpressionSystem(
        name=params.get("name", "conformal_frame"),
        f1_text=f"exp(-({phi}))*cos(u)",
        f2_text=f"exp(-({phi}))*sin(u)",
        control_domain=ControlDomain.circle(),
        provenance="builtin",
        params={"family": "conformal_frame", "phi": phi},
    )


def _zermelo(params: Mapping) -> ExpressionSystem:
    phi = _check_expr(params.get("phi", "0"))
    d1 = _check_expr(params.get("drift1", "0"))
    d2 = _check_expr(params.get("drift2", "0"))
    return ExpressionSystem(
        name=params.get("name", "zermelo"),
        f1_text=f"exp(-({phi}))*cos(u) + ({d1})",
        f2_text=f"exp(-({phi}))*sin(u) + ({d2})",
        control_domain=ControlDomain.circle(),
        provenance="builtin",
        params={"family": "zermelo", "phi": phi, "drift1": d1, "drift2": d2},
    )


def _normal_form(params: Mapping) -> ExpressionSystem:
    a = _check_expr(params.get("a", "0"))
    eps = _sign(params.get("eps", 1))
    u_max = float(params.get("u_max", 0.9))
    return ExpressionSystem(
        name=params.get("name", "normal_form"),
        f1_text="u",
        f2_text=f"1 - ({float(eps)!r})*exp(2*({a}))*u^2",
        control_domain=ControlDomain.interval(-u_max, u_max),
        provenance="builtin",
        params={"family": "normal_form", "a": a, "eps": eps, "u_max": u_max},
    )


def _abnormal_form(params: Mapping) -> ExpressionSystem:
    a = _check_expr(params.get("a", "0"))
    u_min = float(params.get("u_min", 0.0))
    u_max = float(params.get("u_max", 2.0))
    return ExpressionSystem(
        name=params.get("name", "abnormal_form"),
        f1_text="u",
        f2_text=f"exp(2*({a}))*(1 - u)^2",
        control_domain=ControlDomain.interval(u_min, u_max),
        provenance="builtin",
        params={"family": "abnormal_form", "a": a, "u_min": u_min, "u_max": u_max},
    )


def _sign(value) -> int:
    v = int(float(value))
    if v not in (1, -1):
        raise DefinitionError(f"eps must be +1 or -1, got {value!r}")
    return v


BUILTIN_FAMILIES: dict[str, Callable[[Mapping], ExpressionSystem]] = {
    "conformal_frame": _conformal_frame,
    "zermelo": _zermelo,
    "normal_form": _normal_form,
    "abnormal_form": _abnormal_form,
}


def builtin_system(family: str, **params) -> ExpressionSystem:
    """Instantiate a builtin family, e.g. ``builtin_system("normal_form", a="q2")``."""
    try:
        factory = BUILTIN_FAMILIES[family]
    except KeyError:
        raise UnknownFamily(f"unknown builtin family {family!r}; expected one of {sorted(BUILTIN_FAMILIES)}") from None
    return factory(params)


# -- definition files ---------------------------------------------------------

def parse_system(source: str) -> ExpressionSystem:
    """Build a system from its JSON definition text."""
    try:
        data = json.loads(source)
    except json.JSONDecodeError as exc:
        raise DefinitionError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(data, Mapping):
        raise DefinitionError("system definition must be a JSON object")
    if "builtin" in data:
        params = dict(data.get("params", {}))
        if "name" in data:
            params.setdefault("name", data["name"])
        return builtin_system(data["builtin"], **params)
    for key in ("f1", "f2"):
        if key not in data:
            raise DefinitionError(f"system definition lacks {key!r}")
    if "control_domain" not in data:
        raise DomainError("system definition lacks 'control_domain'")
    return ExpressionSystem(
        name=str(data.get("name", "system")),
        f1_text=str(data["f1"]),
        f2_text=str(data["f2"]),
        control_domain=ControlDomain.from_json(data["control_domain"]),
    )


def emit_system(model: ExpressionSystem) -> str:
    """JSON definition text that :func:`parse_system` turns back into ``model``."""
    if model.provenance == "builtin":
        params = {k: v for k, v in model.params.items() if k != "family"}
        params["name"] = model.name
        return json.dumps({"builtin": model.params["family"], "params": params}, indent=2)
    return json.dumps(
        {
            "name": model.name,
            "f1": _expr.emit(model.f1),
            "f2": _expr.emit(model.f2),
            "control_domain": model.control_domain.to_json(),
        },
        indent=2,
    )


def load_system(path) -> ExpressionSystem:
    with open(path, encoding="utf-8") as fh:
        return parse_system(fh.read())
