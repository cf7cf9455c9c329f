"""Truncated multivariate Taylor arithmetic.

A :class:`Taylor` holds the Taylor coefficients of a smooth function of
``nvars`` variables around some base point, truncated at total degree
``order``.  Arithmetic and the elementary functions propagate the truncated
series exactly, so evaluating an expression on seeded variables yields all
partial derivatives up to ``order`` (forward-mode differentiation of
arbitrary order).

Monomials are stored in graded order (total degree first), so restricting a
series to a lower order is a prefix slice.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import product as _iproduct
from typing import Sequence

import numpy as np


@lru_cache(maxsize=None)
def _monomials(nvars: int, order: int) -> tuple[tuple[int, ...], ...]:
    out = []
    for deg in range(order + 1):
        level = [m for m in _iproduct(range(deg + 1), repeat=nvars) if sum(m) == deg]
        level.sort(reverse=True)
        out.extend(level)
    return tuple(out)


@lru_cache(maxsize=None)
def _index(nvars: int, order: int) -> dict[tuple[int, ...], int]:
    return {m: i for i, m in enumerate(_monomials(nvars, order))}


@lru_cache(maxsize=None)
def _product_table(nvars: int, order: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mons = _monomials(nvars, order)
    idx = _index(nvars, order)
    I, J, K = [], [], []
    for i, a in enumerate(mons):
        da = sum(a)
        for j, b in enumerate(mons):
            if da + sum(b) > order:
                continue
            I.append(i)
            J.append(j)
            K.append(idx[tuple(x + y for x, y in zip(a, b))])
    return np.array(I), np.array(J), np.array(K)


@lru_cache(maxsize=None)
def _derivative_map(nvars: int, order: int, var: int) -> tuple[np.ndarray, np.ndarray]:
    """Source indices and factors for d/dx_var, mapping order -> order-1."""
    src_idx = _index(nvars, order)
    src, fac = [], []
    for m in _monomials(nvars, order - 1):
        up = list(m)
        up[var] += 1
        src.append(src_idx[tuple(up)])
        fac.append(up[var])
    return np.array(src, dtype=int), np.array(fac, dtype=float)


@lru_cache(maxsize=None)
def _integral_map(nvars: int, order: int, var: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Target indices, source indices and factors for the antiderivative in x_var."""
    idx = _index(nvars, order)
    tgt, src, fac = [], [], []
    for m in _monomials(nvars, order):
        if m[var] == 0:
            continue
        down = list(m)
        down[var] -= 1
        tgt.append(idx[m])
        src.append(idx[tuple(down)])
        fac.append(1.0 / m[var])
    return np.array(tgt, dtype=int), np.array(src, dtype=int), np.array(fac, dtype=float)


@lru_cache(maxsize=None)
def _factorials(nvars: int, order: int) -> np.ndarray:
    return np.array([math.prod(math.factorial(k) for k in m) for m in _monomials(nvars, order)], dtype=float)


def size(nvars: int, order: int) -> int:
    return math.comb(order + nvars, nvars)


class Taylor:
    """Truncated Taylor series in ``nvars`` variables up to total degree ``order``."""

    __slots__ = ("c", "nvars", "order")
    __array_priority__ = 1000

    def __init__(self, coeffs: np.ndarray, nvars: int, order: int):
        self.c = coeffs
        self.nvars = nvars
        self.order = order

    # -- construction -----------------------------------------------------
    @classmethod
    def constant(cls, value: float, nvars: int, order: int) -> "Taylor":
        c = np.zeros(size(nvars, order))
        c[0] = value
        return cls(c, nvars, order)

    @classmethod
    def variable(cls, value: float, var: int, nvars: int, order: int) -> "Taylor":
        c = np.zeros(size(nvars, order))
        c[0] = value
        if order >= 1:
            e = [0] * nvars
            e[var] = 1
            c[_index(nvars, order)[tuple(e)]] = 1.0
        return cls(c, nvars, order)

    @classmethod
    def seed(cls, point: Sequence[float], order: int) -> list["Taylor"]:
        """Independent variables x_i = point_i + dx_i."""
        n = len(point)
        return [cls.variable(float(p), i, n, order) for i, p in enumerate(point)]

    @classmethod
    def from_partials(cls, partials: dict[tuple[int, ...], float], nvars: int, order: int) -> "Taylor":
        c = np.zeros(size(nvars, order))
        idx = _index(nvars, order)
        for m, v in partials.items():
            if sum(m) <= order:
                c[idx[m]] = v / math.prod(math.factorial(k) for k in m)
        return cls(c, nvars, order)

    # -- access -----------------------------------------------------------
    @property
    def value(self) -> float:
        return float(self.c[0])

    def coeff(self, multi_index: Sequence[int]) -> float:
        m = tuple(multi_index)
        if sum(m) > self.order:
            raise IndexError(f"monomial {m} exceeds order {self.order}")
        return float(self.c[_index(self.nvars, self.order)[m]])

    def partial(self, multi_index: Sequence[int]) -> float:
        m = tuple(multi_index)
        return self.coeff(m) * math.prod(math.factorial(k) for k in m)

    def partials(self) -> dict[tuple[int, ...], float]:
        fac = _factorials(self.nvars, self.order)
        return {m: float(v) for m, v in zip(_monomials(self.nvars, self.order), self.c * fac)}

    def truncate(self, order: int) -> "Taylor":
        if order >= self.order:
            return self
        return Taylor(self.c[: size(self.nvars, order)].copy(), self.nvars, order)

    def nilpotent(self) -> "Taylor":
        c = self.c.copy()
        c[0] = 0.0
        return Taylor(c, self.nvars, self.order)

    def copy(self) -> "Taylor":
        return Taylor(self.c.copy(), self.nvars, self.order)

    def __repr__(self) -> str:
        return f"Taylor(nvars={self.nvars}, order={self.order}, value={self.value!r})"

    # -- calculus ---------------------------------------------------------
    def diff(self, var: int) -> "Taylor":
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 series")
        src, fac = _derivative_map(self.nvars, self.order, var)
        return Taylor(self.c[src] * fac, self.nvars, self.order - 1)

    def integrate(self, var: int) -> "Taylor":
        """Antiderivative in x_var vanishing on x_var = 0, truncated at the same order."""
        tgt, src, fac = _integral_map(self.nvars, self.order, var)
        c = np.zeros_like(self.c)
        c[tgt] = self.c[src] * fac
        return Taylor(c, self.nvars, self.order)

    def lift(self, nvars: int, positions: Sequence[int] | None = None) -> "Taylor":
        """Embed into a series in more variables; old variable i becomes ``positions[i]``."""
        positions = list(range(self.nvars)) if positions is None else list(positions)
        c = np.zeros(size(nvars, self.order))
        idx = _index(nvars, self.order)
        for m, v in zip(_monomials(self.nvars, self.order), self.c):
            if v == 0.0:
                continue
            big = [0] * nvars
            for i, k in enumerate(m):
                big[positions[i]] = k
            c[idx[tuple(big)]] = v
        return Taylor(c, nvars, self.order)

    def compose(self, args: Sequence["Taylor"]) -> "Taylor":
        """Evaluate this series at ``base + args`` where ``args`` have zero constant term.

        ``self`` is a series around some base point in ``self.nvars`` variables;
        the result is a series in the variables of ``args``.
        """
        if len(args) != self.nvars:
            raise ValueError("compose needs one argument per variable")
        order = min(min(a.order for a in args), self.order)
        m_vars = args[0].nvars
        deltas = [a.truncate(order).nilpotent() for a in args]
        one = Taylor.constant(1.0, m_vars, order)
        powers = []
        for d in deltas:
            p = [one]
            for _ in range(order):
                p.append(p[-1] * d)
            powers.append(p)
        out = np.zeros(size(m_vars, order))
        for m, v in zip(_monomials(self.nvars, order), self.c):
            if v == 0.0:
                continue
            term = None
            for i, k in enumerate(m):
                if k:
                    term = powers[i][k] if term is None else term * powers[i][k]
            out += v * (one.c if term is None else term.c)
        return Taylor(out, m_vars, order)

    # -- arithmetic -------------------------------------------------------
    def _coerce(self, other) -> "Taylor":
        if isinstance(other, Taylor):
            if other.nvars != self.nvars:
                raise ValueError("mixing Taylor series with different variable counts")
            return other
        return Taylor.constant(float(other), self.nvars, self.order)

    def __add__(self, other):
        if not isinstance(other, Taylor):
            c = self.c.copy()
            c[0] += other
            return Taylor(c, self.nvars, self.order)
        n = min(self.order, other.order)
        s = size(self.nvars, n)
        return Taylor(self.c[:s] + other.c[:s], self.nvars, n)

    __radd__ = __add__

    def __neg__(self):
        return Taylor(-self.c, self.nvars, self.order)

    def __pos__(self):
        return self

    def __sub__(self, other):
        if not isinstance(other, Taylor):
            c = self.c.copy()
            c[0] -= other
            return Taylor(c, self.nvars, self.order)
        n = min(self.order, other.order)
        s = size(self.nvars, n)
        return Taylor(self.c[:s] - other.c[:s], self.nvars, n)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Taylor):
            return Taylor(self.c * other, self.nvars, self.order)
        n = min(self.order, other.order)
        I, J, K = _product_table(self.nvars, n)
        s = size(self.nvars, n)
        c = np.bincount(K, weights=self.c[:s][I] * other.c[:s][J], minlength=s)
        return Taylor(c, self.nvars, n)

    __rmul__ = __mul__

    def reciprocal(self) -> "Taylor":
        x0 = self.value
        if x0 == 0.0:
            raise ZeroDivisionError("reciprocal of a series with zero constant term")
        coeffs = [(-1.0) ** k / x0 ** (k + 1) for k in range(self.order + 1)]
        return self._apply(coeffs)

    def __truediv__(self, other):
        if not isinstance(other, Taylor):
            return Taylor(self.c / other, self.nvars, self.order)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, exponent):
        if isinstance(exponent, int) or (isinstance(exponent, float) and exponent.is_integer() and abs(exponent) < 64):
            k = int(exponent)
            if k < 0:
                return (self ** (-k)).reciprocal()
            result = Taylor.constant(1.0, self.nvars, self.order)
            base = self
            while k:
                if k & 1:
                    result = result * base
                k >>= 1
                if k:
                    base = base * base
            return result
        return self.powr(float(exponent))

    # -- elementary functions ----------------------------------------------
    def _apply(self, coeffs: Sequence[float]) -> "Taylor":
        """Sum_k coeffs[k] * (self - value)^k by Horner's scheme."""
        d = self.nilpotent()
        n = self.order
        acc = Taylor.constant(coeffs[n], self.nvars, n)
        for k in range(n - 1, -1, -1):
            acc = acc * d
            acc.c[0] += coeffs[k]
        return acc

    def exp(self) -> "Taylor":
        e = math.exp(self.value)
        return self._apply([e / math.factorial(k) for k in range(self.order + 1)])

    def log(self) -> "Taylor":
        x0 = self.value
        if x0 <= 0.0:
            raise ValueError(f"log of non-positive value {x0}")
        coeffs = [math.log(x0)] + [(-1.0) ** (k + 1) / (k * x0**k) for k in range(1, self.order + 1)]
        return self._apply(coeffs)

    def _trig(self, shift: int) -> "Taylor":
        # k-th derivative of sin is cycle[(k + shift) % 4]; exact zeros stay exact
        s, c = math.sin(self.value), math.cos(self.value)
        cycle = (s, c, -s, -c)
        return self._apply([cycle[(k + shift) % 4] / math.factorial(k) for k in range(self.order + 1)])

    def sin(self) -> "Taylor":
        return self._trig(0)

    def cos(self) -> "Taylor":
        return self._trig(1)

    def tan(self) -> "Taylor":
        return self.sin() / self.cos()

    def powr(self, r: float) -> "Taylor":
        x0 = self.value
        if x0 <= 0.0:
            raise ValueError(f"real power of non-positive value {x0}")
        coeffs = []
        binom = 1.0
        for k in range(self.order + 1):
            coeffs.append(binom * x0 ** (r - k))
            binom *= (r - k) / (k + 1)
        return self._apply(coeffs)

    def sqrt(self) -> "Taylor":
        return self.powr(0.5)

    def atan(self) -> "Taylor":
        n = self.order
        x0 = self.value
        t = Taylor.variable(x0, 0, 1, max(n - 1, 0))
        deriv = (1.0 + t * t).reciprocal()
        coeffs = [math.atan(x0)] + [float(deriv.c[k - 1]) / k for k in range(1, n + 1)]
        return self._apply(coeffs)


def solve2(a11, a12, a21, a22, b1, b2):
    """Cramer's rule for a 2x2 system; works on floats and Taylor series alike."""
    det = a11 * a22 - a12 * a21
    return (b1 * a22 - a12 * b2) / det, (a11 * b2 - b1 * a21) / det
