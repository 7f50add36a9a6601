"""Switching-time polynomial systems for chains of integrators.

For the nilpotent Jordan block ``A`` (ones on the superdiagonal), an input
vector ``b`` with ``b[-1] != 0`` and a bang-bang control that starts at ``u0``
and flips sign after each increment ``t_1, ..., t_n``, the terminal condition
``y(T) = 0`` with ``T = t_1 + ... + t_n`` reads, component by component,

    y_i(T) = u0 * sum_k b_{i+k-1} S_k(t) + sum_{k>=i} T^(k-i)/(k-i)! x_k = 0

where ``S_k`` is the signed complete homogeneous sum

    S_k(t) = sum_{|a| = k} (-1)^(min{j : a_j > 0} - 1) t^a / a!.

Equations are stored lowest degree first: ``equations[0]`` is the linear
condition on ``y_n`` and ``equations[n-1]`` the degree-``n`` condition on
``y_1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np

from . import _backend
from .errors import ControllabilityError, DimensionError
from .poly import MultiPoly, Q, inverse_factorial_product, linear_form, multinomial_terms, partial


def _rational_vector(values) -> tuple:
    return tuple(Q(v) for v in values)


@dataclass(frozen=True)
class ProblemSpec:
    """Dimension, input vector, initial state and initial control sign."""

    n: int
    x: tuple
    u0: int = 1
    b: tuple | None = None

    def __post_init__(self):
        if self.n < 2:
            raise DimensionError(f"dimension must be at least 2, got {self.n}")
        if len(self.x) != self.n:
            raise DimensionError(f"state of length {len(self.x)} for n={self.n}")
        if self.u0 not in (-1, 1):
            raise ValueError(f"u0 must be +1 or -1, got {self.u0}")
        b = self.input_vector
        if len(b) != self.n:
            raise DimensionError(f"b of length {len(b)} for n={self.n}")
        if b[-1] == 0:
            raise ControllabilityError("b_n = 0: the pair (A, b) is not controllable")

    @property
    def input_vector(self) -> tuple:
        if self.b is None:
            return (0,) * (self.n - 1) + (1,)
        return tuple(self.b)


def signed_sum(n: int, k: int) -> MultiPoly:
    """``S_k``: sum over |a| = k of (-1)^(first nonzero index) t^a / a!."""
    terms = {}
    for a in multinomial_terms(n, k):
        first = next(j for j in range(n) if a[j])
        sign = 1 if first % 2 == 0 else -1
        terms[a] = sign * inverse_factorial_product(a)
    return MultiPoly(n, terms, "rational")


@lru_cache(maxsize=64)
def _template(n: int, b: tuple):
    """Per-equation pieces: control part and per-``x_k`` parts, all rational."""
    T = linear_form([1] * n)
    t_powers = [MultiPoly.constant(n, 1)]
    for m in range(1, n):
        t_powers.append(t_powers[-1] * T)
    sums = {k: signed_sum(n, k) for k in range(1, n + 1)}
    control_parts, state_parts = [], []
    for i in range(n, 0, -1):  # lowest degree first
        ctrl = MultiPoly.zero(n)
        for k in range(1, n - i + 2):
            coef = b[k + i - 2]
            if coef != 0:
                ctrl = ctrl + sums[k] * coef
        control_parts.append(ctrl)
        row = []
        for k in range(1, n + 1):
            if k < i:
                row.append(MultiPoly.zero(n))
            else:
                row.append(t_powers[k - i] * Q(1, math.factorial(k - i)))
        state_parts.append(row)
    return control_parts, state_parts


@lru_cache(maxsize=64)
def _jacobian_template(n: int, b: tuple):
    """Jacobian pieces built from the closed-form partial derivative (not by
    differentiating the equations) so the two constructions check each other."""
    T = linear_form([1] * n)
    control_rows, state_rows = [], []
    for i in range(n, 0, -1):
        ctrl_row, state_row = [], []
        for q in range(n):
            terms = {}
            for k in range(1, n - i + 2):
                coef = Q(b[k + i - 2])
                if coef == 0:
                    continue
                for a in multinomial_terms(n, k):
                    if a[q] == 0:
                        continue
                    first = next(j for j in range(n) if a[j])
                    sign = 1 if first % 2 == 0 else -1
                    reduced = a[:q] + (a[q] - 1,) + a[q + 1:]
                    terms[reduced] = terms.get(reduced, 0) + sign * coef * inverse_factorial_product(reduced)
            ctrl_row.append(MultiPoly(n, terms))
            row = []
            for k in range(1, n + 1):
                if k <= i:
                    row.append(MultiPoly.zero(n))
                else:
                    row.append(T ** (k - i - 1) * Q(1, math.factorial(k - i - 1)))
            state_row.append(row)
        control_rows.append(ctrl_row)
        state_rows.append(state_row)
    return control_rows, state_rows


def _combine(ctrl: MultiPoly, state_parts: Sequence[MultiPoly], u0, x) -> MultiPoly:
    out = ctrl * Q(u0)
    for xk, part in zip(x, state_parts):
        if xk != 0 and not part.is_zero():
            out = out + part * xk
    return out


@dataclass(frozen=True)
class CompiledSystem:
    """Flat float arrays describing F and its Jacobian for the numeric kernels.

    ``f_eq[k]`` is the equation a term belongs to and ``j_ent[k]`` the flat
    Jacobian entry ``row * n + col``.
    """

    n: int
    f_eq: np.ndarray
    f_exp: np.ndarray
    f_coef: np.ndarray
    j_ent: np.ndarray
    j_exp: np.ndarray
    j_coef: np.ndarray
    maxdeg: int

    def residual(self, t) -> np.ndarray:
        return _backend.kernels.eval_f(self, np.ascontiguousarray(t, dtype=float))

    def jacobian(self, t) -> np.ndarray:
        return _backend.kernels.eval_j(self, np.ascontiguousarray(t, dtype=float)).reshape(self.n, self.n)


def _flatten(polys, n: int, labels):
    eq, exps, coefs = [], [], []
    for label, p in zip(labels, polys):
        for mono, c in sorted(p.terms.items()):
            eq.append(label)
            exps.append(mono)
            coefs.append(float(c))
    exps_arr = np.array(exps, dtype=np.int32).reshape(-1, n)
    return np.array(eq, dtype=np.int32), exps_arr, np.array(coefs, dtype=float)


def compile_polys(equations: Sequence[MultiPoly], jacobian: Sequence[Sequence[MultiPoly]]) -> CompiledSystem:
    n = equations[0].nvars
    f_eq, f_exp, f_coef = _flatten(equations, n, range(n))
    flat_j = [jacobian[i][q] for i in range(n) for q in range(n)]
    j_ent, j_exp, j_coef = _flatten(flat_j, n, range(n * n))
    maxdeg = int(max(f_exp.max(initial=0), j_exp.max(initial=0)))
    return CompiledSystem(n, f_eq, f_exp, f_coef, j_ent, j_exp, j_coef, maxdeg)


@dataclass(frozen=True)
class PolySystem:
    """Square polynomial system with its symbolic Jacobian."""

    equations: tuple
    jacobian: tuple
    spec: ProblemSpec | None = None

    @property
    def n(self) -> int:
        return len(self.equations)

    @classmethod
    def from_polys(cls, equations: Sequence[MultiPoly]) -> "PolySystem":
        """Square system from arbitrary polynomials; Jacobian by formal differentiation."""
        equations = tuple(equations)
        n = len(equations)
        if any(p.nvars != n for p in equations):
            raise DimensionError("system must be square")
        jac = tuple(tuple(partial(p, q) for q in range(n)) for p in equations)
        return cls(equations, jac)

    @cached_property
    def compiled(self) -> CompiledSystem:
        return compile_polys(self.equations, self.jacobian)


def build_system(spec: ProblemSpec) -> PolySystem:
    """Exact rational system and Jacobian for ``spec``."""
    n = spec.n
    b = _rational_vector(spec.input_vector)
    x = _rational_vector(spec.x)
    control_parts, state_parts = _template(n, b)
    equations = tuple(_combine(c, s, spec.u0, x) for c, s in zip(control_parts, state_parts))
    jac = build_jacobian_from_formula(n, b, x, spec.u0)
    return PolySystem(equations, jac, spec)


def build_jacobian_from_formula(n: int, b, x, u0) -> tuple:
    control_rows, state_rows = _jacobian_template(n, _rational_vector(b))
    x = _rational_vector(x)
    return tuple(
        tuple(_combine(c, s, u0, x) for c, s in zip(crow, srow))
        for crow, srow in zip(control_rows, state_rows)
    )


def build_jacobian(system: PolySystem) -> tuple:
    """Formal partial derivatives of ``system.equations`` (``[i][q] = d f_i / d t_q``)."""
    return tuple(tuple(partial(p, q) for q in range(system.n)) for p in system.equations)


def _check_point(t, n: int) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if t.shape != (n,):
        raise DimensionError(f"point of shape {t.shape} for n={n}")
    if not np.all(np.isfinite(t)):
        raise ValueError("non-finite evaluation point")
    return t


def eval_system(system: PolySystem, t) -> np.ndarray:
    return system.compiled.residual(_check_point(t, system.n))


def eval_jacobian(system: PolySystem, t) -> np.ndarray:
    return system.compiled.jacobian(_check_point(t, system.n))


class FastSystemFactory:
    """Float systems for many states sharing ``(n, b)``.

    Every coefficient is linear in ``(u0, x_1, ..., x_n)``, so the factory
    stores one coefficient matrix per term list and instantiates a
    ``CompiledSystem`` with a single matrix-vector product.
    """

    def __init__(self, n: int, b=None):
        if b is None:
            b = (0,) * (n - 1) + (1,)
        ProblemSpec(n, (0,) * n, 1, tuple(b))  # validation only
        self.n = n
        self.b = _rational_vector(b)
        control_parts, state_parts = _template(n, self.b)
        self._f = self._layout([[c] + list(s) for c, s in zip(control_parts, state_parts)], range(n))
        control_rows, state_rows = _jacobian_template(n, self.b)
        pieces = [[control_rows[i][q]] + list(state_rows[i][q]) for i in range(n) for q in range(n)]
        self._j = self._layout(pieces, range(n * n))
        self.maxdeg = int(max(self._f[1].max(initial=0), self._j[1].max(initial=0)))

    def _layout(self, pieces, labels):
        n = self.n
        rows, exps, mats = [], [], []
        for label, parts in zip(labels, pieces):
            monos = sorted(set().union(*(p.terms for p in parts)))
            for mono in monos:
                rows.append(label)
                exps.append(mono)
                mats.append([float(p.terms.get(mono, 0)) for p in parts])
        return (
            np.array(rows, dtype=np.int32),
            np.array(exps, dtype=np.int32).reshape(-1, n),
            np.array(mats, dtype=float).reshape(-1, n + 1),
        )

    def instantiate(self, x, u0: int) -> CompiledSystem:
        params = np.concatenate([[float(u0)], np.asarray(x, dtype=float)])
        f_eq, f_exp, f_mat = self._f
        j_ent, j_exp, j_mat = self._j
        return CompiledSystem(
            self.n,
            f_eq,
            f_exp,
            np.ascontiguousarray(f_mat @ params),
            j_ent,
            j_exp,
            np.ascontiguousarray(j_mat @ params),
            self.maxdeg,
        )


@lru_cache(maxsize=16)
def system_factory(n: int, b: tuple | None = None) -> FastSystemFactory:
    return FastSystemFactory(n, b)
