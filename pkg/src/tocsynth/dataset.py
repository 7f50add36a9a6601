"""Training data from sampled optimal trajectories, stored as JSONL.

File layout: one header line ``{"meta": {...}}`` followed by one line per
sample, ``{"z": [...], "u": 1}``.  Floats are written with ``repr`` so a
read-back is bit-identical.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, SolverStalledError
from .newton import SolveOptions
from .openloop import OpenLoopOptions, SwitchingSolution, control_at, solve_time_optimal, propagate_exact

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_GRID = 2.0**-10


@dataclass(frozen=True)
class Sample:
    z: tuple
    u: int

    def __post_init__(self):
        if self.u not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.u}")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("non-finite state in sample")

    def to_json(self) -> str:
        return json.dumps({"z": [float(v) for v in self.z], "u": int(self.u)}, separators=(",", ":"))


@dataclass
class DatasetMeta:
    n: int
    N_s: int
    K: int = 100
    seed: int = 0
    bounds: tuple = (-1.0, 1.0)
    hermite: bool | None = None  # None: on for n <= 4
    grid: float | None = DEFAULT_GRID
    skipped_count: int = 0
    skipped: list = field(default_factory=list)  # [index, reason] pairs
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.n < 2:
            raise DimensionError("n must be at least 2")
        if self.N_s < 1:
            raise ValueError("N_s must be at least 1")
        if self.K < 1:
            raise ValueError("K must be at least 1")

    @property
    def max_entries(self) -> int:
        return self.N_s * (self.K + 1)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["bounds"] = list(d["bounds"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetMeta":
        d = dict(d)
        d["bounds"] = tuple(tuple(b) if isinstance(b, list) else b for b in d["bounds"])
        return cls(**d)


@dataclass
class Dataset:
    meta: DatasetMeta
    samples: list

    def __len__(self):
        return len(self.samples)

    def arrays(self):
        """``(Z, U)`` with ``Z`` of shape ``(N, n)`` and ``U`` in {-1, +1}."""
        Z = np.array([s.z for s in self.samples], dtype=float).reshape(-1, self.meta.n)
        U = np.array([s.u for s in self.samples], dtype=int)
        return Z, U


def _bounds_array(n: int, bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=float)
    if b.shape == (2,):
        b = np.tile(b, (n, 1))
    if b.shape != (n, 2):
        raise DimensionError(f"bounds of shape {b.shape} for n={n}")
    if np.any(b[:, 1] <= b[:, 0]):
        raise ValueError(f"empty bounds {bounds}")
    return b


def sample_initial_conditions(n: int, N_s: int, seed: int = 0, bounds=(-1.0, 1.0), grid: float | None = None):
    """``N_s`` i.i.d. uniform states in the box ``bounds``.

    With ``grid`` set, each coordinate is rounded to a multiple of ``grid``
    (clipped back into the box).  A dyadic grid keeps the exact rational
    image of every state small, which is what the root counter works on.
    """
    if N_s < 1:
        raise ValueError("N_s must be at least 1")
    b = _bounds_array(n, bounds)
    rng = np.random.default_rng(seed)
    X = rng.uniform(b[:, 0], b[:, 1], size=(N_s, n))
    if grid:
        X = np.clip(np.round(X / grid) * grid, b[:, 0], b[:, 1])
    return [row for row in X]


def generate_trajectory_samples(x, sol: SwitchingSolution, K: int, b=None) -> list:
    """The initial pair followed by ``K`` samples at ``tau_k = k T / K``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    x = np.asarray(x, dtype=float)
    if sol.T == 0:
        return [Sample(tuple(x), sol.u0)]
    out = [Sample(tuple(x), control_at(sol, 0.0))]
    for k in range(1, K + 1):
        tau = sol.T if k == K else sol.T * k / K
        out.append(Sample(tuple(propagate_exact(x, sol, tau, b)), control_at(sol, tau)))
    return out


def _solver_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1)[0])


def _one(args):
    index, x, meta_kw = args
    n, K, hermite, seed = meta_kw
    opts = OpenLoopOptions(hermite=hermite, solver=SolveOptions.for_dimension(n, seed=_solver_seed(seed, index)))
    try:
        sol = solve_time_optimal(x, opts)
    except SolverStalledError as exc:
        return index, None, f"solver stalled: {exc}"
    return index, generate_trajectory_samples(x, sol, K), None


def build_samples(meta: DatasetMeta, workers: int = 1) -> Dataset:
    """Solve every sampled initial condition and collect the samples in index order."""
    xs = sample_initial_conditions(meta.n, meta.N_s, meta.seed, meta.bounds, meta.grid)
    jobs = [(i, x, (meta.n, meta.K, meta.hermite, meta.seed)) for i, x in enumerate(xs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        results = [_one(j) for j in jobs]
    samples = []
    meta.skipped = []
    for index, chunk, reason in results:
        if chunk is None:
            log.warning("skipping initial condition %d: %s", index, reason)
            meta.skipped.append([index, reason])
        else:
            samples.extend(chunk)
    meta.skipped_count = len(meta.skipped)
    return Dataset(meta, samples)


def write_dataset(path, dataset: Dataset) -> Path:
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"meta": dataset.meta.to_dict()}, separators=(",", ":")) + "\n")
            for s in dataset.samples:
                fh.write(s.to_json() + "\n")
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc
    return path


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise ValueError(f"{path}: empty dataset file")
    head = json.loads(lines[0])
    if "meta" not in head:
        raise ValueError(f"{path}: first line is not a header record")
    meta = DatasetMeta.from_dict(head["meta"])
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        rec = json.loads(line)
        z = tuple(rec["z"])
        if len(z) != meta.n:
            raise DimensionError(f"{path}:{lineno}: state of length {len(z)} in an n={meta.n} dataset")
        samples.append(Sample(z, int(rec["u"])))
    return Dataset(meta, samples)


def build_dataset(meta: DatasetMeta, path: str | os.PathLike, workers: int = 1) -> Dataset:
    """Generate the samples for ``meta`` and write them to ``path``."""
    ds = build_samples(meta, workers)
    write_dataset(path, ds)
    log.info("wrote %d samples (%d skipped) to %s", len(ds), meta.skipped_count, path)
    return ds
