"""Feedforward binary classifier in plain numpy.

Hidden layers use ``tanh``, the head is a single sigmoid unit read as the
probability that the control is ``+1``.  Training minimises mean binary
cross-entropy with Adam on mini-batches.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateDataError, DimensionError

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
PROB_CLIP = 1e-12
# keeps the output strictly inside (0, 1)
_P_LO = np.finfo(float).tiny
_P_HI = 1.0 - 2.0**-53

_ACTIVATIONS = {
    "tanh": (np.tanh, lambda a, h: 1.0 - h * h),
}


@dataclass
class MlpModel:
    layer_dims: tuple
    weights: list
    biases: list
    hidden_activation: str = "tanh"

    def __post_init__(self):
        self.layer_dims = tuple(int(d) for d in self.layer_dims)
        if len(self.layer_dims) < 2 or self.layer_dims[-1] != 1:
            raise DimensionError(f"layer dims must end in 1, got {self.layer_dims}")
        if self.hidden_activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.hidden_activation!r}")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise DimensionError("one weight matrix and bias vector per layer")
        for m, (A, b) in enumerate(zip(self.weights, self.biases)):
            shape = (self.layer_dims[m + 1], self.layer_dims[m])
            if A.shape != shape or b.shape != (shape[0],):
                raise DimensionError(f"layer {m}: weight {A.shape}, bias {b.shape}, expected {shape}")

    @classmethod
    def init(cls, layer_dims, seed: int = 0, hidden_activation: str = "tanh") -> "MlpModel":
        """Weights and biases uniform in ``+-1/sqrt(fan_in)``."""
        rng = np.random.default_rng(seed)
        dims = tuple(int(d) for d in layer_dims)
        weights, biases = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            lim = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-lim, lim, size=fan_out))
        return cls(dims, weights, biases, hidden_activation)

    @classmethod
    def zeros(cls, layer_dims) -> "MlpModel":
        dims = tuple(int(d) for d in layer_dims)
        return cls(dims, [np.zeros((o, i)) for i, o in zip(dims[:-1], dims[1:])], [np.zeros(o) for o in dims[1:]])

    @property
    def n_inputs(self) -> int:
        return self.layer_dims[0]

    def params(self) -> list:
        out = []
        for A, b in zip(self.weights, self.biases):
            out += [A, b]
        return out

    def with_params(self, params) -> "MlpModel":
        return replace(self, weights=list(params[0::2]), biases=list(params[1::2]))


@dataclass
class TrainConfig:
    learning_rate: float = 1e-2
    lr_final: float | None = 1e-3  # exponential decay to this rate by the last epoch; None keeps it constant
    batch_size: int = 64
    epochs: int | None = None  # None: enough epochs for ``updates`` Adam steps
    updates: int = 100_000
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8
    split_fraction: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.split_fraction < 1:
            raise ValueError("split_fraction must lie in (0, 1)")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.updates < 1:
            raise ValueError("learning_rate, batch_size and updates must be positive")
        if self.epochs is not None and self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.lr_final is not None and self.lr_final <= 0:
            raise ValueError("lr_final must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1) or self.eps_adam <= 0:
            raise ValueError("invalid Adam hyperparameters")

    def epochs_for(self, n_train: int) -> int:
        if self.epochs is not None:
            return self.epochs
        per_epoch = -(-n_train // self.batch_size)
        return max(1, -(-self.updates // per_epoch))

    def lr_at(self, epoch: int, epochs: int) -> float:
        """Learning rate for 1-based ``epoch`` out of ``epochs``."""
        if self.lr_final is None or epochs == 1:
            return self.learning_rate
        return self.learning_rate * (self.lr_final / self.learning_rate) ** ((epoch - 1) / (epochs - 1))


@dataclass(frozen=True)
class Metrics:
    loss: float
    accuracy: float

    def to_dict(self) -> dict:
        return {"loss": self.loss, "accuracy": self.accuracy}


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0

    @classmethod
    def zeros_like(cls, model: MlpModel) -> "AdamState":
        return cls([np.zeros_like(p) for p in model.params()], [np.zeros_like(p) for p in model.params()])


@dataclass
class TrainResult:
    model: MlpModel
    train: Metrics
    test: Metrics
    history: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.model, self.train, self.test))


def _check_input(model: MlpModel, Z) -> tuple[np.ndarray, bool]:
    Z = np.asarray(Z, dtype=float)
    single = Z.ndim == 1
    Z = np.atleast_2d(Z)
    if Z.shape[1] != model.n_inputs:
        raise DimensionError(f"input of width {Z.shape[1]} for a model expecting {model.n_inputs}")
    return Z, single


def _sigmoid(a: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(a))
    p = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(p, _P_LO, _P_HI)


def _forward_cache(model: MlpModel, Z: np.ndarray):
    act = _ACTIVATIONS[model.hidden_activation][0]
    hs = [Z]
    h = Z
    last = len(model.weights) - 1
    for m, (A, b) in enumerate(zip(model.weights, model.biases)):
        a = h @ A.T + b
        if m == last:
            return hs, a[:, 0]
        h = act(a)
        hs.append(h)
    raise AssertionError("unreachable")


def pre_activation(model: MlpModel, Z) -> np.ndarray | float:
    Z, single = _check_input(model, Z)
    a = _forward_cache(model, Z)[1]
    return float(a[0]) if single else a


def forward(model: MlpModel, Z) -> np.ndarray | float:
    """Probability of the ``+1`` label; a single state gives a float, a batch an array."""
    Z, single = _check_input(model, Z)
    p = _sigmoid(_forward_cache(model, Z)[1])
    return float(p[0]) if single else p


def classify(model: MlpModel, Z):
    """``(label, confidence)`` with label ``+1`` iff ``forward >= 0.5`` and confidence ``|p - 0.5|``.

    The threshold is applied to the pre-activation (``a >= 0``), which is the
    same rule without the rounding of the sigmoid near 0.5.
    """
    Z, single = _check_input(model, Z)
    a = _forward_cache(model, Z)[1]
    labels = np.where(a >= 0, 1, -1)
    conf = np.abs(_sigmoid(a) - 0.5)
    if single:
        return int(labels[0]), float(conf[0])
    return labels, conf


def _lam(U) -> np.ndarray:
    U = np.asarray(U)
    if not np.all(np.isin(U, (-1, 1))):
        raise ValueError("labels must be -1 or +1")
    return (U > 0).astype(float)


def bce_from_probs(p, lam) -> float:
    p = np.clip(np.asarray(p, dtype=float), PROB_CLIP, 1.0 - PROB_CLIP)
    lam = np.asarray(lam, dtype=float)
    return float(np.mean(-lam * np.log(p) - (1.0 - lam) * np.log1p(-p)))


def bce_loss(model: MlpModel, Z, U) -> float:
    """Mean binary cross-entropy of labels ``U`` in {-1, +1}."""
    Z, _ = _check_input(model, Z)
    if Z.shape[0] == 0:
        raise ValueError("empty sample set")
    return bce_from_probs(forward(model, Z), _lam(U))


def accuracy(model: MlpModel, Z, U) -> float:
    labels, _ = classify(model, np.atleast_2d(Z))
    return float(np.mean(labels == np.asarray(U)))


def evaluate(model: MlpModel, Z, U) -> Metrics:
    return Metrics(bce_loss(model, Z, U), accuracy(model, Z, U))


def gradients(model: MlpModel, Z, U) -> list:
    """Gradient of the mean BCE in the order of ``model.params()``.

    Uses ``dL/da = (p - lambda) / N`` at the sigmoid pre-activation, the
    exact derivative away from the probability clip.
    """
    Z, _ = _check_input(model, Z)
    N = Z.shape[0]
    if N == 0:
        raise ValueError("empty batch")
    dact = _ACTIVATIONS[model.hidden_activation][1]
    hs, a_out = _forward_cache(model, Z)
    p = _sigmoid(a_out)
    delta = ((p - _lam(U)) / N)[:, None]
    grads = [None] * (2 * len(model.weights))
    for m in range(len(model.weights) - 1, -1, -1):
        h_in = hs[m]
        grads[2 * m] = delta.T @ h_in
        grads[2 * m + 1] = delta.sum(axis=0)
        if m:
            delta = (delta @ model.weights[m]) * dact(None, h_in)
    return grads


def adam_step(model: MlpModel, grads, state: AdamState, config: TrainConfig, lr: float | None = None):
    """One bias-corrected Adam update; returns ``(new_model, new_state)``."""
    b1, b2 = config.beta1, config.beta2
    lr = config.learning_rate if lr is None else lr
    step = state.step + 1
    m_new, v_new, params = [], [], []
    c1 = 1.0 - b1**step
    c2 = 1.0 - b2**step
    for p, g, m, v in zip(model.params(), grads, state.m, state.v):
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * (g * g)
        params.append(p - lr * (m / c1) / (np.sqrt(v / c2) + config.eps_adam))
        m_new.append(m)
        v_new.append(v)
    return model.with_params(params), AdamState(m_new, v_new, step)


def split(N: int, fraction: float, seed: int):
    """Seeded shuffle; returns ``(train_idx, test_idx)``."""
    perm = np.random.default_rng(seed).permutation(N)
    cut = int(round(fraction * N))
    cut = min(max(cut, 1), N - 1) if N > 1 else N
    return perm[:cut], perm[cut:]


def train(Z, U, layer_dims, config: TrainConfig | None = None, model: MlpModel | None = None) -> TrainResult:
    """Shuffle-split, mini-batch Adam, metrics on both splits."""
    config = config or TrainConfig()
    Z = np.asarray(Z, dtype=float)
    U = np.asarray(U, dtype=int)
    if Z.ndim != 2 or Z.shape[0] == 0 or Z.shape[0] != U.shape[0]:
        raise ValueError("need a nonempty (N, n) state array with N labels")
    if np.unique(U).size < 2:
        raise DegenerateDataError("training data contains a single class")
    ss = np.random.SeedSequence(config.seed)
    split_seed, init_seed, batch_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(3))
    tr, te = split(Z.shape[0], config.split_fraction, split_seed)
    Ztr, Utr, Zte, Ute = Z[tr], U[tr], Z[te], U[te]
    if model is None:
        model = MlpModel.init(layer_dims, init_seed)
    state = AdamState.zeros_like(model)
    rng = np.random.default_rng(batch_seed)
    history = []
    epochs = config.epochs_for(Ztr.shape[0])
    for epoch in range(1, epochs + 1):
        lr = config.lr_at(epoch, epochs)
        order = rng.permutation(Ztr.shape[0])
        for start in range(0, order.size, config.batch_size):
            idx = order[start:start + config.batch_size]
            model, state = adam_step(model, gradients(model, Ztr[idx], Utr[idx]), state, config, lr)
        rec = {"epoch": epoch, "train_loss": bce_loss(model, Ztr, Utr)}
        if Zte.shape[0]:
            rec["test_loss"] = bce_loss(model, Zte, Ute)
        history.append(rec)
        log.debug("epoch %d %s", epoch, rec)
    test = evaluate(model, Zte, Ute) if Zte.shape[0] else Metrics(float("nan"), float("nan"))
    return TrainResult(model, evaluate(model, Ztr, Utr), test, history)


def model_to_dict(model: MlpModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "layer_dims": list(model.layer_dims),
        "hidden_activation": model.hidden_activation,
        "weights": [A.tolist() for A in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }


def model_from_dict(d: dict) -> MlpModel:
    if d.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format version {d.get('format_version')!r}")
    return MlpModel(
        tuple(d["layer_dims"]),
        [np.array(A, dtype=float).reshape(o, i) for A, i, o in zip(d["weights"], d["layer_dims"][:-1], d["layer_dims"][1:])],
        [np.array(b, dtype=float) for b in d["biases"]],
        d.get("hidden_activation", "tanh"),
    )


def save_model(model: MlpModel, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model)))
    return path


def load_model(path) -> MlpModel:
    return model_from_dict(json.loads(Path(path).read_text()))
