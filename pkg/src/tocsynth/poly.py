"""Sparse multivariate polynomials over floats or exact rationals.

A polynomial is a map from exponent tuples to nonzero coefficients.  Two
coefficient fields are supported: ``"float"`` (binary64) and ``"rational"``
(arbitrary precision, gmpy2 ``mpq`` when available, ``fractions.Fraction``
otherwise).  Zero pruning is exact: a float coefficient is dropped only when it
is exactly ``0.0``.
"""

from __future__ import annotations

import enum
import math
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .errors import DimensionError

try:
    from gmpy2 import mpq as _mpq

    def Q(value=0, den=None):
        if den is not None:
            return _mpq(value, den)
        if isinstance(value, float):
            # exact binary expansion, no decimal rounding
            return _mpq(*value.as_integer_ratio())
        if isinstance(value, str):
            return _mpq(Fraction(value.strip()))
        if hasattr(value, "numerator") and not isinstance(value, int):
            return _mpq(int(value.numerator), int(value.denominator))
        return _mpq(value)

    RATIONAL_TYPES: tuple = (type(_mpq(0)), Fraction, int)
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency

    def Q(value=0, den=None):
        if den is not None:
            return Fraction(value, den)
        if isinstance(value, str):
            return Fraction(value.strip())
        return Fraction(value)

    RATIONAL_TYPES = (Fraction, int)

FIELDS = ("float", "rational")

Monomial = tuple


class MonomialOrder(enum.Enum):
    LEX = "lex"
    GREVLEX = "grevlex"

    def key(self, m: Monomial) -> tuple:
        """Sort key: a larger key means a larger monomial."""
        if self is MonomialOrder.LEX:
            return tuple(m)
        return (sum(m), tuple(-e for e in reversed(m)))


def order_compare(m1: Sequence[int], m2: Sequence[int], order=MonomialOrder.GREVLEX) -> int:
    """Return -1, 0 or 1 as ``m1`` is less than, equal to or greater than ``m2``."""
    if len(m1) != len(m2):
        raise DimensionError(f"monomials of length {len(m1)} and {len(m2)}")
    order = MonomialOrder(order)
    k1, k2 = order.key(tuple(m1)), order.key(tuple(m2))
    return (k1 > k2) - (k1 < k2)


def to_field(value, field: str):
    if field == "float":
        return float(value)
    if field == "rational":
        return Q(value)
    raise ValueError(f"unknown field {field!r}")


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(x + y for x, y in zip(a, b))


class MultiPoly:
    """Immutable sparse polynomial in ``nvars`` variables."""

    __slots__ = ("nvars", "terms", "field")

    def __init__(self, nvars: int, terms: Mapping[Monomial, object] | None = None, field: str = "rational"):
        if nvars < 1:
            raise DimensionError("a polynomial needs at least one variable")
        if field not in FIELDS:
            raise ValueError(f"unknown field {field!r}")
        clean = {}
        for mono, c in (terms or {}).items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != nvars:
                raise DimensionError(f"monomial {mono} in a {nvars}-variable polynomial")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in {mono}")
            c = to_field(c, field)
            if c != 0:
                clean[mono] = clean.get(mono, 0) + c
                if clean[mono] == 0:
                    del clean[mono]
        self.nvars = nvars
        self.terms = clean
        self.field = field

    @classmethod
    def _raw(cls, nvars: int, terms: dict, field: str) -> "MultiPoly":
        p = object.__new__(cls)
        p.nvars, p.terms, p.field = nvars, terms, field
        return p

    @classmethod
    def zero(cls, nvars: int, field: str = "rational") -> "MultiPoly":
        return cls._raw(nvars, {}, field)

    @classmethod
    def constant(cls, nvars: int, value, field: str = "rational") -> "MultiPoly":
        return cls(nvars, {(0,) * nvars: value}, field)

    @classmethod
    def variable(cls, nvars: int, index: int, field: str = "rational") -> "MultiPoly":
        if not 0 <= index < nvars:
            raise DimensionError(f"variable index {index} out of range for {nvars} variables")
        mono = tuple(1 if j == index else 0 for j in range(nvars))
        return cls(nvars, {mono: 1}, field)

    # -- basic queries -------------------------------------------------
    def is_zero(self) -> bool:
        return not self.terms

    def total_degree(self) -> int:
        """Largest total degree of a term; -1 for the zero polynomial."""
        return max((sum(m) for m in self.terms), default=-1)

    def coefficient(self, mono: Sequence[int]):
        return self.terms.get(tuple(mono), to_field(0, self.field))

    def leading_monomial(self, order=MonomialOrder.GREVLEX) -> Monomial:
        if not self.terms:
            raise ValueError("zero polynomial has no leading monomial")
        return max(self.terms, key=MonomialOrder(order).key)

    def to_float(self) -> "MultiPoly":
        return MultiPoly._raw(self.nvars, {m: float(c) for m, c in self.terms.items()}, "float")

    def to_rational(self) -> "MultiPoly":
        return MultiPoly._raw(self.nvars, {m: Q(c) for m, c in self.terms.items()}, "rational")

    # -- arithmetic ----------------------------------------------------
    def _check(self, other: "MultiPoly") -> None:
        if other.nvars != self.nvars:
            raise DimensionError(f"{self.nvars} vs {other.nvars} variables")
        if other.field != self.field:
            raise TypeError(f"cannot mix {self.field} and {other.field} coefficients")

    def _coerce(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            self._check(other)
            return other
        return MultiPoly.constant(self.nvars, other, self.field)

    def __add__(self, other) -> "MultiPoly":
        other = self._coerce(other)
        out = dict(self.terms)
        for m, c in other.terms.items():
            s = out.get(m, 0) + c
            if s == 0:
                out.pop(m, None)
            else:
                out[m] = s
        return MultiPoly._raw(self.nvars, out, self.field)

    __radd__ = __add__

    def __neg__(self) -> "MultiPoly":
        return MultiPoly._raw(self.nvars, {m: -c for m, c in self.terms.items()}, self.field)

    def __sub__(self, other) -> "MultiPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "MultiPoly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "MultiPoly":
        if not isinstance(other, MultiPoly):
            return scale(self, other)
        self._check(other)
        out: dict = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                m = _mono_mul(m1, m2)
                s = out.get(m, 0) + c1 * c2
                if s == 0:
                    out.pop(m, None)
                else:
                    out[m] = s
        return MultiPoly._raw(self.nvars, out, self.field)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "MultiPoly":
        if k < 0:
            raise ValueError("negative power")
        result = MultiPoly.constant(self.nvars, 1, self.field)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    def __eq__(self, other) -> bool:
        if isinstance(other, MultiPoly):
            return self.nvars == other.nvars and self.terms == other.terms
        if not self.terms:
            return other == 0
        return self.terms == {(0,) * self.nvars: other}

    def __hash__(self):
        return hash((self.nvars, frozenset(self.terms.items())))

    def __call__(self, point):
        return evaluate(self, point)

    def __repr__(self) -> str:
        return f"MultiPoly({self.render()!r}, field={self.field!r})"

    def __str__(self) -> str:
        return self.render()

    def render(self, names: Sequence[str] | None = None, order=MonomialOrder.GREVLEX) -> str:
        """Canonical text form, terms in descending ``order``: ``1/2*t1^2 + t1*t2 - 1/2*t2^2``."""
        if names is None:
            names = [f"t{j + 1}" for j in range(self.nvars)]
        if not self.terms:
            return "0"
        key = MonomialOrder(order).key
        pieces = []
        for mono in sorted(self.terms, key=key, reverse=True):
            c = self.terms[mono]
            neg = c < 0
            mag = -c if neg else c
            factors = []
            for name, e in zip(names, mono):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            if mag == 1 and factors:
                body = "*".join(factors)
            else:
                body = "*".join([_render_coeff(mag)] + factors)
            pieces.append((neg, body))
        first_neg, first = pieces[0]
        out = ("-" if first_neg else "") + first
        for neg, body in pieces[1:]:
            out += (" - " if neg else " + ") + body
        return out


def _render_coeff(c) -> str:
    if isinstance(c, float):
        return repr(c)
    c = Fraction(int(c.numerator), int(c.denominator))
    return str(c.numerator) if c.denominator == 1 else f"{c.numerator}/{c.denominator}"


def add(p: MultiPoly, q: MultiPoly) -> MultiPoly:
    return p + q


def mul(p: MultiPoly, q: MultiPoly) -> MultiPoly:
    return p * q


def scale(p: MultiPoly, c) -> MultiPoly:
    c = to_field(c, p.field)
    if c == 0:
        return MultiPoly.zero(p.nvars, p.field)
    return MultiPoly._raw(p.nvars, {m: v * c for m, v in p.terms.items()}, p.field)


def poly_arith(op: str, p: MultiPoly, q) -> MultiPoly:
    """Dispatch ``add``, ``mul`` or ``scale`` by name."""
    if op == "add":
        return p + q
    if op == "mul":
        return p * q
    if op == "scale":
        return scale(p, q)
    raise ValueError(f"unknown operation {op!r}")


def evaluate(p: MultiPoly, point: Sequence):
    """Term-by-term evaluation; exact when both ``p`` and ``point`` are rational."""
    if len(point) != p.nvars:
        raise DimensionError(f"point of length {len(point)} for {p.nvars} variables")
    vals = [to_field(v, p.field) for v in point]
    total = to_field(0, p.field)
    for mono, c in p.terms.items():
        term = c
        for v, e in zip(vals, mono):
            if e:
                term = term * v**e
        total = total + term
    return total


def partial(p: MultiPoly, var: int) -> MultiPoly:
    if not 0 <= var < p.nvars:
        raise DimensionError(f"variable index {var} out of range for {p.nvars} variables")
    out = {}
    for mono, c in p.terms.items():
        e = mono[var]
        if e:
            m = mono[:var] + (e - 1,) + mono[var + 1:]
            out[m] = c * e
    return MultiPoly._raw(p.nvars, out, p.field)


def linear_form(coeffs: Iterable, field: str = "rational") -> MultiPoly:
    """``sum(c_j * t_j)``."""
    coeffs = list(coeffs)
    n = len(coeffs)
    terms = {tuple(1 if k == j else 0 for k in range(n)): c for j, c in enumerate(coeffs)}
    return MultiPoly(n, terms, field)


def multinomial_terms(nvars: int, degree: int):
    """Yield every exponent tuple with ``sum == degree``."""
    if nvars == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in multinomial_terms(nvars - 1, degree - first):
            yield (first,) + rest


def inverse_factorial_product(mono: Sequence[int]):
    """Exact ``1 / (a_1! ... a_n!)`` as a rational."""
    return Q(1, math.prod(math.factorial(a) for a in mono))
