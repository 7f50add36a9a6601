"""Deflated Newton iteration for exhausting the real roots of a square system.

After a root ``r`` is found the residual is replaced by

    G(t) = (1 / eta(t) + xi) F(t),   eta(t) = prod_i ||t - r_i||_2 ** p

so that a fresh Newton run from the same guess is pushed away from every
known root.  ``xi > 0`` keeps ``G`` from vanishing far away from the roots.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import DeflationSingularityError, DimensionError
from .sysgen import CompiledSystem, PolySystem

log = logging.getLogger(__name__)

MAX_ITERATION = 1000


class SolveStatus(str, enum.Enum):
    EXHAUSTED = "exhausted"  # found the requested number of roots
    STALLED = "stalled"  # an attempt hit max_iteration on every restart
    DIVERGED = "diverged"  # the last failing attempt blew up


@dataclass
class DeflationState:
    roots: list = field(default_factory=list)
    p: int = 2
    xi: float = 1.0
    dedup_tol: float = 1e-6

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("deflation power must be a positive integer")
        if self.xi < 0:
            raise ValueError("deflation shift must be non-negative")

    def root_array(self, n: int) -> np.ndarray:
        return np.asarray(self.roots, dtype=float).reshape(-1, n)


@dataclass
class SolveOptions:
    guess: np.ndarray | None = None  # defaults to the all-ones vector
    n_roots: int = 1
    eps: float = 1e-10
    max_iteration: int = MAX_ITERATION
    p: int = 2
    xi: float = 1.0
    dedup_tol: float = 1e-6
    residual_tol: float = 1e-8
    admissibility_tol: float = 1e-9
    restarts: int = 5
    restart_box: tuple = (0.0, 2.0)
    seed: int = 0
    blowup: float = 1e8
    polish_iterations: int = 30
    stop_on_admissible: bool = False

    @classmethod
    def for_dimension(cls, n: int, **overrides) -> "SolveOptions":
        """Defaults tuned per dimension: a wider, more often restarted search from n = 4 on."""
        if n >= 4:
            overrides.setdefault("restart_box", (0.0, 4.0))
            overrides.setdefault("restarts", 10)
        return cls(**overrides)

    def __post_init__(self):
        if self.max_iteration < 1:
            raise ValueError("max_iteration must be at least 1")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.n_roots < 0:
            raise ValueError("n_roots must be non-negative")


@dataclass
class SolveResult:
    roots: list
    status: SolveStatus
    iterations: int
    attempts: int

    def __iter__(self):
        return iter(self.roots)

    def __len__(self):
        return len(self.roots)


def _eta_and_grad(t: np.ndarray, ds: DeflationState):
    """``eta(t)`` and ``grad log eta(t)``."""
    eta = 1.0
    grad = np.zeros_like(t)
    for r in ds.roots:
        diff = t - np.asarray(r, dtype=float)
        d2 = float(diff @ diff)
        if np.sqrt(d2) <= ds.dedup_tol:
            raise DeflationSingularityError(f"point {t} is within {ds.dedup_tol} of root {r}")
        eta *= np.sqrt(d2) ** ds.p
        grad += ds.p * diff / d2
    return eta, grad


def deflate(F_val, t, ds: DeflationState) -> np.ndarray:
    """Deflated residual ``(1/eta(t) + xi) F(t)``."""
    t = np.asarray(t, dtype=float)
    eta, _ = _eta_and_grad(t, ds)
    return (1.0 / eta + ds.xi) * np.asarray(F_val, dtype=float)


def deflated_jacobian(F_val, J_val, t, ds: DeflationState) -> np.ndarray:
    """Product-rule derivative of :func:`deflate`.

    ``G' = (1/eta + xi) F' - (1/eta) F (grad log eta)^T``.
    """
    t = np.asarray(t, dtype=float)
    F_val = np.atleast_1d(np.asarray(F_val, dtype=float))
    J_val = np.atleast_2d(np.asarray(J_val, dtype=float))
    eta, grad = _eta_and_grad(t, ds)
    return (1.0 / eta + ds.xi) * J_val - np.outer(F_val / eta, grad)


def is_admissible(root, tol: float = 1e-9) -> bool:
    """True when every component is at least ``-tol``."""
    return bool(np.all(np.asarray(root, dtype=float) >= -tol))


def clamp_admissible(root, tol: float = 1e-9) -> np.ndarray:
    """Snap components within ``tol`` of zero (either side) to exactly zero.

    Float roots of states on a switching surface carry interval lengths like
    1e-17; left in place they would decide the initial control.
    """
    root = np.array(root, dtype=float)
    root[np.abs(root) <= tol] = 0.0
    return root


def _as_compiled(system) -> CompiledSystem:
    return system.compiled if isinstance(system, PolySystem) else system


def newton_polish(system, t, iterations: int = 30, eps: float = 1e-15):
    """Plain Newton from ``t`` on the undeflated system; returns ``(t, iterations)``."""
    cs = _as_compiled(system)
    t_new, it, _ = _backend.kernels.newton_run(cs, np.zeros((0, cs.n)), 1, 0.0, t, eps, iterations, np.inf)
    return t_new, it


def _residual(cs: CompiledSystem, t) -> float:
    r = cs.residual(t)
    return float(np.max(np.abs(r))) if np.all(np.isfinite(r)) else np.inf


def deflated_solve(system, opts: SolveOptions) -> SolveResult:
    """Find up to ``opts.n_roots`` distinct real roots of ``system``.

    Each root search starts from ``opts.guess``; when that attempt fails
    (hits ``max_iteration``, diverges, or converges to a non-root or a known
    root) up to ``opts.restarts`` seeded uniform guesses from
    ``opts.restart_box`` are tried before the search stops.  Converged points
    are polished on the undeflated system before being accepted.
    """
    cs = _as_compiled(system)
    n = cs.n
    guess = np.ones(n) if opts.guess is None else np.asarray(opts.guess, dtype=float)
    if guess.shape != (n,):
        raise DimensionError(f"guess of shape {guess.shape} for n={n}")
    rng = np.random.default_rng(opts.seed)
    lo, hi = opts.restart_box
    kern = _backend.kernels
    roots: list = []
    total_iterations = 0
    attempts = 0
    status = SolveStatus.EXHAUSTED
    while len(roots) < opts.n_roots:
        found = None
        last_status = kern.MAX_ITER
        for attempt in range(opts.restarts + 1):
            start = guess if attempt == 0 else rng.uniform(lo, hi, size=n)
            attempts += 1
            t, it, code = kern.newton_run(
                cs, np.asarray(roots).reshape(-1, n), opts.p, opts.xi, start,
                opts.eps, opts.max_iteration, opts.blowup,
            )
            total_iterations += it
            last_status = code
            if code != kern.CONVERGED:
                continue
            t, it = newton_polish(cs, t, opts.polish_iterations)
            total_iterations += it
            if not np.all(np.isfinite(t)) or _residual(cs, t) > opts.residual_tol:
                continue
            if any(np.linalg.norm(t - r) <= opts.dedup_tol for r in roots):
                continue
            found = t
            break
        if found is None:
            status = SolveStatus.DIVERGED if last_status == kern.DIVERGED else SolveStatus.STALLED
            break
        roots.append(found)
        if opts.stop_on_admissible and is_admissible(found, opts.admissibility_tol):
            break
    log.debug("deflated_solve: %d roots, status %s, %d iterations", len(roots), status.value, total_iterations)
    return SolveResult(roots, status, total_iterations, attempts)
