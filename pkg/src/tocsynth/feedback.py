"""Closed-loop simulation with the learned classifier and Monte Carlo noise studies.

Dynamics ``y' = A y + b u`` (``A`` the nilpotent shift) are integrated with
explicit Euler.  Additive noise enters the last state component only.  All
runs of a Monte Carlo batch are advanced together; a run is frozen once it
enters the stop ball.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError
from .nn import MlpModel, classify
from .openloop import OpenLoopOptions, SwitchingSolution, control_at, solve_time_optimal, solve_with_report

log = logging.getLogger(__name__)

NETWORK = "network"
FALLBACK = "fallback"
MODES = ("open", "net", "net-fallback", "oracle")
NOISE_SCALINGS = ("direct", "dt", "sqrt_dt")
_CHUNK = 1024


@dataclass
class SimConfig:
    dt: float | None = None  # None: 5e-4 for n = 2, 1e-3 otherwise
    confidence_eps: float = 0.01
    stop_radius: float = 1e-2  # infinity norm
    max_time: float = 10.0
    noise_sigma: float = 0.0
    noise_is_variance: bool = False  # read noise_sigma as a variance
    noise_scaling: str = "sqrt_dt"  # per-step increment: std, std*dt or std*sqrt(dt)
    fallback: bool = True
    seed: int = 0
    b: tuple | None = None

    def __post_init__(self):
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.confidence_eps < 0:
            raise ValueError("confidence_eps must be non-negative")
        if self.stop_radius <= 0:
            raise ValueError("stop_radius must be positive")
        if self.max_time <= 0:
            raise ValueError("max_time must be positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if self.noise_scaling not in NOISE_SCALINGS:
            raise ValueError(f"noise_scaling must be one of {NOISE_SCALINGS}")

    def step_size(self, n: int) -> float:
        if self.dt is not None:
            return self.dt
        return 5e-4 if n == 2 else 1e-3

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.noise_sigma) if self.noise_is_variance else self.noise_sigma

    def increment_std(self, dt: float) -> float:
        s = self.noise_std
        if self.noise_scaling == "dt":
            return s * dt
        if self.noise_scaling == "sqrt_dt":
            return s * math.sqrt(dt)
        return s


@dataclass(frozen=True)
class TrajectoryPoint:
    tau: float
    y: tuple
    u: int
    source: str


@dataclass
class TrajectoryRecord:
    points: list
    final_y: tuple
    T_NN: float | None
    dt: float
    fallback_failures: int = 0

    @property
    def fallback_fraction(self) -> float:
        if not self.points:
            return 0.0
        return sum(p.source == FALLBACK for p in self.points) / len(self.points)

    @property
    def controls(self) -> np.ndarray:
        return np.array([p.u for p in self.points], dtype=float)

    def states(self) -> np.ndarray:
        """Visited states including the final one, shape ``(steps + 1, n)``."""
        return np.array([p.y for p in self.points] + [self.final_y])

    def write_csv(self, path) -> Path:
        path = Path(path)
        n = len(self.final_y)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau"] + [f"y{i + 1}" for i in range(n)] + ["u", "source"])
            for p in self.points:
                w.writerow([repr(p.tau)] + [repr(v) for v in p.y] + [p.u, p.source])
            w.writerow([repr(len(self.points) * self.dt)] + [repr(v) for v in self.final_y] + ["", "end"])
        return path


@dataclass
class MonteCarloStats:
    mode: str
    M: int
    dt: float
    mean: np.ndarray  # (steps + 1, n)
    var: np.ndarray  # (steps + 1, n)
    final_states: np.ndarray  # (M, n)
    reach_times: np.ndarray  # (M,), nan when the stop ball was not reached
    fallback_fraction: float = 0.0

    @property
    def taus(self) -> np.ndarray:
        return self.dt * np.arange(self.mean.shape[0])

    @property
    def mean_final_norm(self) -> float:
        return float(np.mean(np.linalg.norm(self.final_states, axis=1)))

    def summary(self) -> dict:
        reached = np.isfinite(self.reach_times)
        return {
            "mode": self.mode,
            "M": self.M,
            "dt": self.dt,
            "steps": int(self.mean.shape[0] - 1),
            "mean_final_norm": self.mean_final_norm,
            "reached_fraction": float(np.mean(reached)),
            "mean_reach_time": float(np.mean(self.reach_times[reached])) if reached.any() else None,
            "fallback_fraction": self.fallback_fraction,
        }

    def write_csv(self, path) -> Path:
        path = Path(path)
        n = self.mean.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tau"] + [f"mean_y{i + 1}" for i in range(n)] + [f"var_y{i + 1}" for i in range(n)])
            for tau, m, v in zip(self.taus, self.mean, self.var):
                w.writerow([repr(float(tau))] + [repr(float(a)) for a in m] + [repr(float(a)) for a in v])
        return path


def _input_vector(n: int, b) -> np.ndarray:
    if b is None:
        out = np.zeros(n)
        out[-1] = 1.0
        return out
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise DimensionError(f"input vector of shape {b.shape} for n={n}")
    return b


def euler_step(Y: np.ndarray, u: np.ndarray, dt: float, bvec: np.ndarray) -> np.ndarray:
    """One explicit Euler step for a batch of states ``Y`` of shape ``(M, n)``."""
    drift = np.empty_like(Y)
    drift[:, :-1] = Y[:, 1:]
    drift[:, -1] = 0.0
    drift += u[:, None] * bvec
    return Y + dt * drift


class _Noise:
    """Per-run Gaussian streams drawn in fixed-size chunks so batching does not change them."""

    def __init__(self, seed: int, runs, scale: float):
        self.scale = scale
        self.rngs = [np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(r),))) for r in runs]
        self.buf = None
        self.pos = _CHUNK

    def draw(self) -> np.ndarray:
        if self.pos == _CHUNK:
            self.buf = np.stack([r.standard_normal(_CHUNK) for r in self.rngs])
            self.pos = 0
        out = self.buf[:, self.pos]
        self.pos += 1
        return self.scale * out


def _fallback_control(y: np.ndarray, b) -> int | None:
    sol, _ = solve_with_report(y, OpenLoopOptions(hermite=False, exhaust=False, b=b))
    if sol is None:
        return None
    return control_at(sol, 0.0)


class _Controller:
    def __init__(self, mode: str, model: MlpModel | None, cfg: SimConfig, sol: SwitchingSolution | None, dt: float):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode in ("net", "net-fallback") and model is None:
            raise ValueError(f"mode {mode!r} needs a model")
        if mode == "open" and sol is None:
            raise ValueError("open-loop mode needs a solution")
        self.mode, self.model, self.cfg, self.sol, self.dt = mode, model, cfg, sol, dt
        self.failures = 0

    def horizon_steps(self) -> int | None:
        """Open-loop replay ends at the optimal horizon."""
        if self.mode != "open":
            return None
        return int(math.ceil(self.sol.T / self.dt - 1e-9))

    def __call__(self, Y: np.ndarray, k: int):
        M = Y.shape[0]
        src = np.zeros(M, dtype=bool)  # True where the fallback decided
        if self.mode == "open":
            tau = min(k * self.dt, self.sol.T)
            return np.full(M, float(control_at(self.sol, tau))), src
        if self.mode == "oracle":
            u = np.empty(M)
            for i in range(M):
                v = _fallback_control(Y[i], self.cfg.b)
                if v is None:
                    self.failures += 1
                    v = 1
                u[i] = v
            return u, np.ones(M, dtype=bool)
        labels, conf = classify(self.model, Y)
        u = labels.astype(float)
        if self.mode == "net-fallback" and self.cfg.fallback and self.cfg.confidence_eps > 0:
            for i in np.flatnonzero(conf < self.cfg.confidence_eps):
                v = _fallback_control(Y[i], self.cfg.b)
                if v is None:
                    self.failures += 1
                    continue
                u[i] = v
                src[i] = True
        return u, src


def _spread(Y: np.ndarray) -> np.ndarray:
    # shifting by one run keeps identical runs at exactly zero variance
    return (Y - Y[0]).var(axis=0)


def _run(controller: _Controller, X0: np.ndarray, cfg: SimConfig, runs, record: bool):
    """Advance the batch until every run is in the stop ball or time runs out."""
    M, n = X0.shape
    dt = controller.dt
    bvec = _input_vector(n, cfg.b)
    max_steps = int(math.ceil(cfg.max_time / dt - 1e-9))
    horizon = controller.horizon_steps()
    if horizon is not None:
        max_steps = min(max_steps, horizon)
    scale = cfg.increment_std(dt)
    noise = _Noise(cfg.seed, runs, scale) if scale > 0 else None
    Y = X0.astype(float).copy()
    active = np.max(np.abs(Y), axis=1) >= cfg.stop_radius
    reach = np.where(active, np.nan, 0.0)
    means, variances = [Y.mean(axis=0)], [_spread(Y)]
    log_u, log_src, log_y = [], [], []
    fallback_steps = 0
    control_steps = 0
    k = 0
    while k < max_steps and active.any():
        idx = np.flatnonzero(active)
        u, src = controller(Y[idx], k)
        fallback_steps += int(src.sum())
        control_steps += idx.size
        if record:
            log_y.append(Y[0].copy())
            log_u.append(int(u[0]))
            log_src.append(FALLBACK if src[0] else NETWORK)
        step = euler_step(Y[idx], u, dt, bvec)
        if noise is not None:
            eta = noise.draw()
            step[:, -1] += eta[idx]
        Y[idx] = step
        k += 1
        done = idx[np.max(np.abs(step), axis=1) < cfg.stop_radius]
        active[done] = False
        reach[done] = k * dt
        means.append(Y.mean(axis=0))
        variances.append(_spread(Y))
    frac = fallback_steps / control_steps if control_steps else 0.0
    return Y, reach, np.array(means), np.array(variances), (log_y, log_u, log_src), frac


def _check_model(model: MlpModel | None, n: int) -> None:
    if model is not None and model.n_inputs != n:
        raise DimensionError(f"model expects {model.n_inputs} inputs, state has {n}")


def simulate_closed_loop(model: MlpModel | None, x, cfg: SimConfig | None = None, mode: str = "net-fallback",
                         run_index: int = 0) -> TrajectoryRecord:
    """One closed-loop run from ``x``; ``mode`` is ``net``, ``net-fallback`` or ``oracle``."""
    cfg = cfg or SimConfig()
    x = np.asarray(x, dtype=float)
    n = x.size
    _check_model(model, n)
    if mode == "open":
        raise ValueError("open-loop replay runs through monte_carlo")
    ctl = _Controller(mode, model, cfg, None, cfg.step_size(n))
    Y, reach, _, _, (ys, us, srcs), _ = _run(ctl, x[None, :], cfg, [run_index], record=True)
    dt = ctl.dt
    points = [TrajectoryPoint(k * dt, tuple(float(v) for v in y), u, s) for k, (y, u, s) in enumerate(zip(ys, us, srcs))]
    T = None if np.isnan(reach[0]) else float(reach[0])
    return TrajectoryRecord(points, tuple(float(v) for v in Y[0]), T, dt, ctl.failures)


def replay(x, controls, cfg: SimConfig | None = None, run_index: int = 0) -> np.ndarray:
    """Re-integrate a logged control sequence; returns the visited states ``(steps + 1, n)``."""
    cfg = cfg or SimConfig()
    Y = np.asarray(x, dtype=float)[None, :].copy()
    n = Y.shape[1]
    dt = cfg.step_size(n)
    bvec = _input_vector(n, cfg.b)
    scale = cfg.increment_std(dt)
    noise = _Noise(cfg.seed, [run_index], scale) if scale > 0 else None
    out = [Y[0].copy()]
    for u in controls:
        Y = euler_step(Y, np.array([float(u)]), dt, bvec)
        if noise is not None:
            Y[:, -1] += noise.draw()
        out.append(Y[0].copy())
    return np.array(out)


def monte_carlo(mode: str, x, cfg: SimConfig | None = None, M: int = 1000, model: MlpModel | None = None,
                sol: SwitchingSolution | None = None) -> MonteCarloStats:
    """``M`` seeded noisy runs from the same ``x``; per-step mean and variance.

    ``open`` replays the signal of the initial solve (computed here unless
    ``sol`` is given) up to its horizon regardless of drift.
    """
    if M < 1:
        raise ValueError("M must be at least 1")
    cfg = cfg or SimConfig()
    x = np.asarray(x, dtype=float)
    n = x.size
    _check_model(model, n)
    if mode == "open" and sol is None:
        sol = solve_time_optimal(x, OpenLoopOptions(b=cfg.b))
    ctl = _Controller(mode, model, cfg, sol, cfg.step_size(n))
    X0 = np.tile(x, (M, 1))
    Y, reach, means, variances, _, frac = _run(ctl, X0, cfg, range(M), record=False)
    if ctl.failures:
        log.warning("%d fallback solves stalled; network labels used", ctl.failures)
    return MonteCarloStats(mode, M, ctl.dt, means, np.maximum(variances, 0.0), Y, reach, frac)
