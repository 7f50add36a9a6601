"""Per-state time-optimal solve and exact trajectory propagation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DimensionError, SolverStalledError
from .hermite import count_real_roots
from .newton import SolveOptions, clamp_admissible, deflated_solve, is_admissible
from .poly import Q
from .sysgen import ProblemSpec, system_factory

log = logging.getLogger(__name__)

HERMITE_MAX_N = 4


@dataclass(frozen=True)
class SwitchingSolution:
    u0: int
    t: tuple
    T: float
    residual: float = 0.0

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def switch_times(self) -> np.ndarray:
        """Cumulative times ``T_1, ..., T_n``."""
        return np.cumsum(self.t)

    def to_dict(self) -> dict:
        return {"u0": self.u0, "t": list(self.t), "T": self.T, "residual": self.residual}


@dataclass
class OpenLoopOptions:
    hermite: bool | None = None  # None: on for n <= 4
    solver: SolveOptions | None = None  # None: SolveOptions.for_dimension(n)
    admissibility_tol: float = 1e-9
    exhaust: bool = True  # False: accept the first admissible root found
    b: tuple | None = None

    def use_hermite(self, n: int) -> bool:
        return n <= HERMITE_MAX_N if self.hermite is None else self.hermite


@dataclass
class SignReport:
    u0: int
    hermite_count: int | None = None
    n_roots: int = 0
    roots: list = field(default_factory=list)
    admissible: list = field(default_factory=list)
    status: str = "skipped"
    iterations: int = 0


@dataclass
class OpenLoopReport:
    signs: dict = field(default_factory=dict)

    @property
    def iterations(self) -> int:
        return sum(r.iterations for r in self.signs.values())


def _check_state(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DimensionError(f"state must be a vector of length >= 2, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite initial state")
    return x


def solve_with_report(x, opts: OpenLoopOptions | None = None):
    """Try both initial signs; return ``(solution or None, report)``."""
    opts = opts or OpenLoopOptions()
    x = _check_state(x)
    n = x.size
    report = OpenLoopReport()
    if not np.any(x):
        return SwitchingSolution(1, (0.0,) * n, 0.0, 0.0), report
    factory = system_factory(n, None if opts.b is None else tuple(opts.b))
    hermite = opts.use_hermite(n)
    solver = opts.solver or SolveOptions.for_dimension(n)
    exact_x = tuple(Q(float(v)) for v in x)
    candidates = {}
    for u0 in (1, -1):
        sr = SignReport(u0)
        report.signs[u0] = sr
        if hermite:
            sr.hermite_count = count_real_roots(ProblemSpec(n, exact_x, u0, opts.b))
            sr.n_roots = sr.hermite_count
        else:
            sr.n_roots = math.factorial(n)
        if sr.n_roots == 0:
            continue
        cs = factory.instantiate(x, u0)
        res = deflated_solve(cs, replace(solver, n_roots=sr.n_roots, stop_on_admissible=not opts.exhaust))
        sr.roots, sr.status, sr.iterations = res.roots, res.status.value, res.iterations
        for r in res.roots:
            if is_admissible(r, opts.admissibility_tol):
                t = clamp_admissible(r, opts.admissibility_tol)
                resid = float(np.max(np.abs(cs.residual(t))))
                sr.admissible.append((t, resid))
        if sr.admissible:
            t, resid = min(sr.admissible, key=lambda pair: float(np.sum(pair[0])))
            candidates[u0] = SwitchingSolution(u0, tuple(float(v) for v in t), float(np.sum(t)), resid)
            if not opts.exhaust:
                break
    if not candidates:
        return None, report
    if len(candidates) == 2:
        log.debug("both signs admissible at x=%s (T=%g, %g)", x, candidates[1].T, candidates[-1].T)
        best = candidates[1] if candidates[1].T <= candidates[-1].T else candidates[-1]
    else:
        (best,) = candidates.values()
    return best, report


def solve_time_optimal(x, opts: OpenLoopOptions | None = None) -> SwitchingSolution:
    """Admissible time-optimal switching sequence from state ``x``.

    Raises ``SolverStalledError`` when neither initial sign yields a
    non-negative root within the solver budget.
    """
    sol, report = solve_with_report(x, opts)
    if sol is None:
        detail = {u0: (r.hermite_count, len(r.roots), r.status) for u0, r in report.signs.items()}
        raise SolverStalledError(f"no admissible switching sequence for x={list(np.asarray(x, float))}: {detail}")
    return sol


def _input_vector(n: int, b) -> np.ndarray:
    if b is None:
        out = np.zeros(n)
        out[-1] = 1.0
        return out
    return np.asarray(b, dtype=float)


def flow(y, u: float, d: float, b=None) -> np.ndarray:
    """Exact state after holding control ``u`` for duration ``d``.

    ``exp(dA) y + u * sum_m d^(m+1)/(m+1)! A^m b`` with ``A`` the nilpotent
    Jordan block, so ``(A^m v)_i = v_{i+m}``.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    bv = _input_vector(n, b)
    out = np.empty(n)
    for i in range(n):
        s = 0.0
        for m in range(n - i):
            s += d**m / math.factorial(m) * y[i + m] + u * d ** (m + 1) / math.factorial(m + 1) * bv[i + m]
        out[i] = s
    return out


def _check_tau(sol: SwitchingSolution, tau: float) -> None:
    if not (0.0 <= tau <= sol.T) and not math.isclose(tau, sol.T, rel_tol=0, abs_tol=1e-12):
        raise ValueError(f"tau={tau} outside [0, {sol.T}]")


def propagate_exact(x, sol: SwitchingSolution, tau: float, b=None) -> np.ndarray:
    """State at time ``tau`` under the bang-bang signal of ``sol``."""
    _check_tau(sol, tau)
    y = np.asarray(x, dtype=float)
    if y.size != sol.n:
        raise DimensionError(f"state of length {y.size} for an n={sol.n} solution")
    elapsed = 0.0
    u = sol.u0
    for ti in sol.t:
        if tau <= elapsed:
            break
        d = min(ti, tau - elapsed)
        if d > 0:
            y = flow(y, u, d, b)
        elapsed += ti
        u = -u
    return y


def control_at(sol: SwitchingSolution, tau: float) -> int:
    """Right-continuous control value; zero-length intervals are skipped and the last one is closed."""
    _check_tau(sol, tau)
    u = sol.u0
    elapsed = 0.0
    last = None
    for i, ti in enumerate(sol.t):
        sign = u if i % 2 == 0 else -u
        if ti <= 0:
            continue
        last = sign
        if tau < elapsed + ti:
            return sign
        elapsed += ti
    return u if last is None else last


def sample_trajectory(x, sol: SwitchingSolution, K: int, b=None):
    """``(tau, states, controls)`` at ``tau_k = k T / K`` for ``k = 1..K``."""
    if K < 1:
        raise ValueError("K must be positive")
    taus = sol.T * np.arange(1, K + 1) / K
    taus[-1] = sol.T
    states = np.array([propagate_exact(x, sol, tau, b) for tau in taus])
    controls = np.array([control_at(sol, tau) for tau in taus], dtype=int)
    return taus, states, controls
