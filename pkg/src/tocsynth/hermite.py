"""Exact real-root counting with Groebner bases and Hermite trace forms.

For a zero-dimensional ideal ``J`` with standard monomials ``b_1..b_r`` the
Hermite matrix has entries ``H[i][j] = trace(multiplication by b_i*b_j on
R/J)``.  Its rank is the number of distinct complex roots and its signature
the number of distinct real roots.  Everything here runs over the rationals.
"""

from __future__ import annotations

import heapq
import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

from .errors import DimensionError, NotZeroDimensionalError, ResourceLimitError
from .poly import MonomialOrder, MultiPoly, Q
from .sysgen import ProblemSpec, build_system

log = logging.getLogger(__name__)

DEFAULT_MAX_PAIRS = 20_000


def _neg_key_fn(order: MonomialOrder):
    """Key whose *smallest* value is the largest monomial (for heapq)."""
    if order is MonomialOrder.LEX:
        return lambda m: tuple(-e for e in m)
    return lambda m: (-sum(m),) + tuple(reversed(m))


def _divides(a: tuple, b: tuple) -> bool:
    for x, y in zip(a, b):
        if x > y:
            return False
    return True


def _lcm(a: tuple, b: tuple) -> tuple:
    return tuple(x if x > y else y for x, y in zip(a, b))


def _sub(a: tuple, b: tuple) -> tuple:
    return tuple(x - y for x, y in zip(a, b))


class _Reducer:
    """Normal forms against a growing list of monic polynomials."""

    def __init__(self, nvars: int, order: MonomialOrder):
        self.nvars = nvars
        self.order = order
        self.key = order.key
        self.neg_key = _neg_key_fn(order)
        self.leads: list[tuple] = []
        self.tails: list[list] = []  # terms of each element without its leading term

    def add(self, poly: dict) -> int:
        lm = max(poly, key=self.key)
        c = poly[lm]
        tail = [(m, v / c) for m, v in poly.items() if m != lm]
        self.leads.append(lm)
        self.tails.append(tail)
        return len(self.leads) - 1

    def element(self, i: int) -> dict:
        out = dict(self.tails[i])
        out[self.leads[i]] = Q(1)
        return out

    def find_divisor(self, mono: tuple, active) -> int | None:
        for i in active:
            if _divides(self.leads[i], mono):
                return i
        return None

    def reduce(self, poly: dict, active, full: bool = True) -> dict:
        p = dict(poly)
        heap = [(self.neg_key(m), m) for m in p]
        heapq.heapify(heap)
        rem = {}
        while heap:
            _, m = heapq.heappop(heap)
            c = p.pop(m, None)
            if c is None:
                continue
            i = self.find_divisor(m, active)
            if i is None:
                rem[m] = c
                if not full:
                    for key_m in list(p):
                        rem[key_m] = p.pop(key_m)
                    break
                continue
            shift = _sub(m, self.leads[i])
            for tm, tc in self.tails[i]:
                mm = tuple(a + b for a, b in zip(tm, shift))
                old = p.get(mm)
                if old is None:
                    p[mm] = -c * tc
                    heapq.heappush(heap, (self.neg_key(mm), mm))
                else:
                    new = old - c * tc
                    if new == 0:
                        del p[mm]
                    else:
                        p[mm] = new
        return rem


@dataclass(frozen=True)
class Ideal:
    generators: tuple
    order: MonomialOrder = MonomialOrder.GREVLEX

    def __post_init__(self):
        if not self.generators:
            raise ValueError("an ideal needs at least one generator")
        if len({g.nvars for g in self.generators}) != 1:
            raise DimensionError("generators disagree on the number of variables")

    @property
    def nvars(self) -> int:
        return self.generators[0].nvars


@dataclass(frozen=True)
class GroebnerBasis:
    elements: tuple
    order: MonomialOrder
    nvars: int
    pairs_processed: int = 0

    @property
    def leading_monomials(self) -> list:
        return [g.leading_monomial(self.order) for g in self.elements]

    def is_unit(self) -> bool:
        return any(sum(m) == 0 for m in self.leading_monomials)

    def _reducer(self) -> _Reducer:
        red = _Reducer(self.nvars, self.order)
        for g in self.elements:
            red.add(g.terms)
        return red


def buchberger(ideal: Ideal, max_pairs: int = DEFAULT_MAX_PAIRS) -> GroebnerBasis:
    """Reduced Groebner basis by Buchberger's algorithm.

    Pairs are taken in order of increasing sugar degree, ties broken by the
    monomial order of the lcm.  Buchberger's coprime-leads criterion and
    chain criterion discard pairs without reduction.
    """
    order = MonomialOrder(ideal.order)
    n = ideal.nvars
    red = _Reducer(n, order)
    sugar: list[int] = []
    active: list[int] = []
    pending: dict = {}  # (i, j) -> lcm
    heap: list = []
    counter = itertools.count()
    processed = 0

    def insert(poly: dict, sug: int) -> bool:
        idx = red.add(poly)
        sugar.append(sug)
        if sum(red.leads[idx]) == 0:
            return True
        for i in active:
            lcm = _lcm(red.leads[i], red.leads[idx])
            s = max(sugar[i] + sum(lcm) - sum(red.leads[i]), sug + sum(lcm) - sum(red.leads[idx]))
            pending[(i, idx)] = lcm
            heapq.heappush(heap, (s, order.key(lcm), next(counter), i, idx))
        active.append(idx)
        return False

    unit = False
    for g in ideal.generators:
        g = g.to_rational()
        if g.is_zero():
            continue
        r = red.reduce(g.terms, active)
        if r and insert(r, g.total_degree()):
            unit = True
            break

    while heap and not unit:
        s, _, _, i, j = heapq.heappop(heap)
        lcm = pending.pop((i, j))
        li, lj = red.leads[i], red.leads[j]
        if all(a == 0 or b == 0 for a, b in zip(li, lj)):
            continue
        if _chain_criterion(i, j, lcm, active, red.leads, pending):
            continue
        processed += 1
        if processed > max_pairs:
            raise ResourceLimitError(f"more than {max_pairs} S-pairs")
        spoly = _s_polynomial(red, i, j, lcm)
        r = red.reduce(spoly, active)
        if r:
            unit = insert(r, s)

    if unit:
        one = MultiPoly.constant(n, 1)
        return GroebnerBasis((one,), order, n, processed)
    return GroebnerBasis(_reduced(red, active), order, n, processed)


def _chain_criterion(i, j, lcm, active, leads, pending) -> bool:
    for k in active:
        if k == i or k == j:
            continue
        if not _divides(leads[k], lcm):
            continue
        if (min(i, k), max(i, k)) in pending or (min(j, k), max(j, k)) in pending:
            continue
        return True
    return False


def _s_polynomial(red: _Reducer, i: int, j: int, lcm: tuple) -> dict:
    out: dict = {}
    for idx, sign in ((i, 1), (j, -1)):
        shift = _sub(lcm, red.leads[idx])
        for m, c in red.tails[idx]:
            mm = tuple(a + b for a, b in zip(m, shift))
            v = out.get(mm, 0) + sign * c
            if v == 0:
                out.pop(mm, None)
            else:
                out[mm] = v
    return out


def _reduced(red: _Reducer, active: list) -> tuple:
    minimal = []
    for i in active:
        li = red.leads[i]
        if any(k != i and _divides(red.leads[k], li) and (red.leads[k] != li or k < i) for k in active):
            continue
        minimal.append(i)
    out = []
    for i in minimal:
        others = [k for k in minimal if k != i]
        tail = red.reduce(dict(red.tails[i]), others)
        tail[red.leads[i]] = Q(1)
        out.append(MultiPoly(red.nvars, tail))
    out.sort(key=lambda g: red.key(g.leading_monomial(red.order)))
    return tuple(out)


def normal_form(f: MultiPoly, gb: GroebnerBasis) -> MultiPoly:
    """Remainder of ``f`` on division by ``gb``; no term is divisible by a leading monomial."""
    if f.nvars != gb.nvars:
        raise DimensionError(f"{f.nvars} vs {gb.nvars} variables")
    red = gb._reducer()
    rem = red.reduce(f.to_rational().terms, range(len(gb.elements)))
    return MultiPoly(gb.nvars, rem)


def quotient_basis(gb: GroebnerBasis) -> list:
    """Standard monomials of ``R/J`` in increasing monomial order."""
    n = gb.nvars
    leads = gb.leading_monomials
    if any(sum(m) == 0 for m in leads):
        return []
    bounds = []
    for v in range(n):
        pure = [m[v] for m in leads if all(e == 0 for j, e in enumerate(m) if j != v)]
        if not pure:
            raise NotZeroDimensionalError(f"no pure power of t{v + 1} among the leading monomials")
        bounds.append(min(pure))
    out = []
    for mono in itertools.product(*(range(b) for b in bounds)):
        if not any(_divides(lm, mono) for lm in leads):
            out.append(tuple(mono))
    out.sort(key=gb.order.key)
    return out


def multiplication_matrix(g: MultiPoly, gb: GroebnerBasis, basis: Sequence[tuple]) -> list:
    """Matrix of ``f + J -> g f + J`` in ``basis`` (column k is the image of basis[k])."""
    red = gb._reducer()
    index = {m: k for k, m in enumerate(basis)}
    r = len(basis)
    mat = [[Q(0)] * r for _ in range(r)]
    for k, b in enumerate(basis):
        prod = {tuple(x + y for x, y in zip(m, b)): c for m, c in g.to_rational().terms.items()}
        nf = red.reduce(prod, range(len(gb.elements)))
        for m, c in nf.items():
            mat[index[m]][k] = c
    return mat


def hermite_matrix(gb: GroebnerBasis, basis: Sequence[tuple] | None = None) -> list:
    """Hermite trace form ``H[i][j] = trace(multiplication by b_i b_j)``.

    Uses linearity of the trace: with ``NF(b_i b_j) = sum_m c_m b_m``,
    ``H[i][j] = sum_m c_m * trace(b_m)`` and ``trace(b_m) = sum_k [NF(b_m b_k)]_k``.
    Only the ``r(r+1)/2`` products ``b_i b_j`` are reduced.
    """
    if basis is None:
        basis = quotient_basis(gb)
    red = gb._reducer()
    everything = range(len(gb.elements))
    r = len(basis)
    index = {m: k for k, m in enumerate(basis)}
    products = {}
    for a in range(r):
        for b in range(a, r):
            mono = tuple(x + y for x, y in zip(basis[a], basis[b]))
            if mono not in products:
                nf = red.reduce({mono: Q(1)}, everything)
                products[mono] = {index[m]: c for m, c in nf.items()}
            products[(a, b)] = products[mono]
    trace = [Q(0)] * r
    for m in range(r):
        s = Q(0)
        for k in range(r):
            key = (m, k) if m <= k else (k, m)
            s += products[key].get(k, 0)
        trace[m] = s
    H = [[Q(0)] * r for _ in range(r)]
    for a in range(r):
        for b in range(a, r):
            v = Q(0)
            for m, c in products[(a, b)].items():
                v += c * trace[m]
            H[a][b] = H[b][a] = v
    return H


def charpoly(M: Sequence[Sequence]) -> list:
    """Characteristic polynomial ``det(x I - M)``, coefficients highest degree first.

    Exact: similarity reduction to upper Hessenberg form, then the standard
    Hessenberg determinant recurrence.
    """
    n = len(M)
    H = [[Q(v) for v in row] for row in M]
    for m in range(1, n - 1):
        piv = next((i for i in range(m, n) if H[i][m - 1] != 0), None)
        if piv is None:
            continue
        if piv != m:
            H[piv], H[m] = H[m], H[piv]
            for row in H:
                row[piv], row[m] = row[m], row[piv]
        p = H[m][m - 1]
        for i in range(m + 1, n):
            u = H[i][m - 1] / p
            if u == 0:
                continue
            ri, rm = H[i], H[m]
            for k in range(n):
                ri[k] -= u * rm[k]
            for row in H:
                row[m] += u * row[i]
    # polys as coefficient lists, lowest degree first
    polys = [[Q(1)]]
    for m in range(n):
        nxt = [Q(0)] + polys[m]  # x * p_m
        hmm = H[m][m]
        for k, c in enumerate(polys[m]):
            nxt[k] -= hmm * c
        prod = Q(1)
        for i in range(m - 1, -1, -1):
            prod *= H[i + 1][i]
            if prod == 0:
                break
            coef = H[i][m] * prod
            if coef != 0:
                for k, c in enumerate(polys[i]):
                    nxt[k] -= coef * c
        polys.append(nxt)
    return list(reversed(polys[n]))


def _sign_changes(coeffs) -> int:
    signs = [c > 0 for c in coeffs if c != 0]
    return sum(a != b for a, b in zip(signs, signs[1:]))


def signature_and_rank(H: Sequence[Sequence]) -> tuple:
    """``(signature, rank)`` of a rational symmetric matrix.

    The characteristic polynomial of a symmetric matrix is real-rooted, so
    Descartes' rule of signs counts its positive and negative roots exactly.
    """
    r = len(H)
    if any(len(row) != r for row in H):
        raise DimensionError("matrix is not square")
    for i in range(r):
        for j in range(i + 1, r):
            if H[i][j] != H[j][i]:
                raise ValueError("matrix is not symmetric")
    if r == 0:
        return 0, 0
    coeffs = charpoly(H)  # highest degree first
    zero_mult = 0
    for c in reversed(coeffs):
        if c != 0:
            break
        zero_mult += 1
    positive = _sign_changes(coeffs)
    negated = [c if (len(coeffs) - 1 - k) % 2 == 0 else -c for k, c in enumerate(coeffs)]
    negative = _sign_changes(negated)
    return positive - negative, r - zero_mult


@dataclass(frozen=True)
class HermiteReport:
    groebner: GroebnerBasis
    quotient_basis: tuple
    H: tuple
    rank: int
    signature: int

    @property
    def quotient_dim(self) -> int:
        return len(self.quotient_basis)


def hermite_report(spec: ProblemSpec, order=MonomialOrder.GREVLEX, max_pairs: int = DEFAULT_MAX_PAIRS) -> HermiteReport:
    """Groebner basis, standard monomials, Hermite matrix and its inertia for ``spec``.

    Float coordinates of ``spec.x`` are taken at their exact binary value.
    """
    system = build_system(spec)
    gb = buchberger(Ideal(system.equations, MonomialOrder(order)), max_pairs=max_pairs)
    basis = quotient_basis(gb)
    H = hermite_matrix(gb, basis)
    sig, rank = signature_and_rank(H)
    return HermiteReport(gb, tuple(basis), tuple(tuple(row) for row in H), rank, sig)


def count_real_roots(spec: ProblemSpec, **kwargs) -> int:
    """Number of distinct real switching sequences for ``spec``."""
    return hermite_report(spec, **kwargs).signature
