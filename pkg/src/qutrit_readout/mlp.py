"""Per-qubit feed-forward classifier trained with Adam, numpy only.

Architecture is ``P -> floor(P/2) -> floor(P/4) -> k`` with ReLU hidden
layers and a softmax output.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .rng import derive_seed, stream

N_LEVELS = 3


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss)."""


def layer_sizes(p: int, k: int = N_LEVELS) -> list[int]:
    return [p, p // 2, p // 4, k]


def mlp_parameter_count(p: int, k: int = N_LEVELS) -> int:
    sizes = layer_sizes(p, k)
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 128
    max_epochs: int = 200
    patience: int = 10
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.eps > 0):
            raise ValueError("learning rate and eps must be positive")
        if min(self.batch_size, self.max_epochs, self.patience) < 1:
            raise ValueError("batch size, epochs and patience must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.optimizer != "adam":
            raise ValueError(f"unsupported optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class MLPModel:
    """Trained network plus the feature standardization it expects.

    ``weights[i]`` has shape ``(sizes[i], sizes[i+1])``.
    """

    qubit_index: int
    sizes: list
    weights: list
    biases: list
    mean: np.ndarray
    std: np.ndarray
    history: dict = field(default_factory=dict)

    def __post_init__(self):
        if list(self.sizes) != layer_sizes(self.sizes[0], self.sizes[-1]):
            raise ValueError(f"layer sizes {self.sizes} do not follow P, P/2, P/4, k")
        for w, b, a, c in zip(self.weights, self.biases, self.sizes[:-1], self.sizes[1:]):
            if w.shape != (a, c) or b.shape != (c,):
                raise ValueError("weight shapes do not match the layer sizes")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise ValueError("non-finite weights")

    @property
    def n_features(self) -> int:
        return self.sizes[0]

    def standardize(self, features) -> np.ndarray:
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if x.shape[1] != self.n_features:
            raise ValueError(f"feature width mismatch: model expects {self.n_features}, got {x.shape[1]}")
        return (x - self.mean) / self.std

    def logits(self, features) -> np.ndarray:
        return forward(self.params, self.standardize(features))[0]

    def predict_proba(self, features) -> np.ndarray:
        return softmax(self.logits(features))

    def predict(self, features) -> np.ndarray:
        # argmax returns the first maximum, i.e. the lower level on ties
        return np.argmax(self.predict_proba(features), axis=1)

    @property
    def params(self) -> list:
        return [t for wb in zip(self.weights, self.biases) for t in wb]

    def to_dict(self) -> dict:
        return {
            "qubit_index": self.qubit_index,
            "sizes": list(self.sizes),
            "activation": {"hidden": "relu", "output": "softmax"},
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "normalization": {"mean": self.mean.tolist(), "std": self.std.tolist()},
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLPModel":
        return cls(
            qubit_index=d["qubit_index"],
            sizes=list(d["sizes"]),
            weights=[np.array(w, dtype=float).reshape(a, b) for w, a, b in zip(d["weights"], d["sizes"][:-1], d["sizes"][1:])],
            biases=[np.array(b, dtype=float) for b in d["biases"]],
            mean=np.array(d["normalization"]["mean"], dtype=float),
            std=np.array(d["normalization"]["std"], dtype=float),
            history=d.get("history", {}),
        )


def parameter_count(model: MLPModel) -> int:
    return sum(w.size + b.size for w, b in zip(model.weights, model.biases))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params, x):
    """Logits and the per-layer activations needed by ``loss_and_grads``."""
    acts = [x]
    h = x
    n_layers = len(params) // 2
    for i in range(n_layers):
        h = h @ params[2 * i] + params[2 * i + 1]
        if i < n_layers - 1:
            h = np.maximum(h, 0.0)
        acts.append(h)
    return h, acts


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y)), y].mean())


def loss_and_grads(params, x, y):
    """Mean cross-entropy and its gradient with respect to every parameter."""
    logits, acts = forward(params, x)
    loss = cross_entropy(logits, y)
    delta = softmax(logits)
    delta[np.arange(len(y)), y] -= 1.0
    delta /= len(y)
    grads = [None] * len(params)
    for i in range(len(params) // 2 - 1, -1, -1):
        grads[2 * i] = acts[i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        if i:
            delta = (delta @ params[2 * i].T) * (acts[i] > 0)
    return loss, grads


def init_params(sizes, gen: np.random.Generator) -> list:
    """He-uniform weights, zero biases."""
    params = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / a)
        params.append(gen.uniform(-limit, limit, size=(a, b)))
        params.append(np.zeros(b))
    return params


def _standardization(x: np.ndarray):
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    # constant features (e.g. zero-flagged kernels) pass through centred
    std = np.where(std > 0, std, 1.0)
    return mean, std


def train_mlp(features, labels, val_features, val_labels, cfg: TrainConfig = TrainConfig(), qubit_index: int = 0, k: int = N_LEVELS) -> MLPModel:
    """Fit one network with Adam and early stopping on validation loss.

    Returns the parameters from the epoch with the lowest validation loss.
    Batch order and initialization come from streams keyed by
    ``(cfg.seed, qubit_index)``.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    xv = np.asarray(val_features, dtype=float)
    yv = np.asarray(val_labels, dtype=np.int64)
    if x.ndim != 2 or len(x) != len(y) or xv.shape[1:] != x.shape[1:] or len(xv) != len(yv):
        raise ValueError("feature and label shapes are inconsistent")
    if len(xv) == 0:
        raise ValueError("validation split is empty")
    if np.any((y < 0) | (y >= k)) or np.any((yv < 0) | (yv >= k)):
        raise ValueError(f"labels must lie in [0, {k})")
    missing = sorted(set(range(k)) - set(np.unique(y).tolist()))
    if missing:
        raise ValueError(f"qubit {qubit_index}: class {missing} absent from training labels")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xv))):
        raise ValueError("non-finite features")

    sizes = layer_sizes(x.shape[1], k)
    if min(sizes) < 1:
        raise ValueError(f"feature width {x.shape[1]} too small for a hidden layer")
    mean, std = _standardization(x)
    x = (x - mean) / std
    xv = (xv - mean) / std

    seed = derive_seed(cfg.seed, f"mlp{qubit_index}")
    params = init_params(sizes, stream(seed, 0))
    with np.errstate(over="ignore", invalid="ignore"):
        params, history = _adam(params, x, y, xv, yv, cfg, stream(seed, 1), qubit_index)
    return MLPModel(
        qubit_index=qubit_index,
        sizes=sizes,
        weights=params[0::2],
        biases=params[1::2],
        mean=mean,
        std=std,
        history=history,
    )


def _adam(params, x, y, xv, yv, cfg: TrainConfig, order_gen: np.random.Generator, qubit_index: int):
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    step = 0
    best = (np.inf, 0, [p.copy() for p in params])
    train_loss, val_loss = [], []
    for epoch in range(cfg.max_epochs):
        perm = order_gen.permutation(len(x))
        total = 0.0
        for s in range(0, len(x), cfg.batch_size):
            b = perm[s : s + cfg.batch_size]
            loss, grads = loss_and_grads(params, x[b], y[b])
            if not np.isfinite(loss):
                raise TrainingError(f"qubit {qubit_index}: non-finite loss at epoch {epoch}")
            total += loss * len(b)
            step += 1
            c1 = 1 - cfg.beta1**step
            c2 = 1 - cfg.beta2**step
            for p, g, mi, vi in zip(params, grads, m, v):
                mi *= cfg.beta1
                mi += (1 - cfg.beta1) * g
                vi *= cfg.beta2
                vi += (1 - cfg.beta2) * g * g
                p -= cfg.learning_rate * (mi / c1) / (np.sqrt(vi / c2) + cfg.eps)
        vl = cross_entropy(forward(params, xv)[0], yv)
        if not np.isfinite(vl):
            raise TrainingError(f"qubit {qubit_index}: non-finite validation loss at epoch {epoch}")
        train_loss.append(total / len(x))
        val_loss.append(vl)
        if vl < best[0]:
            best = (vl, epoch, [p.copy() for p in params])
        elif epoch - best[1] >= cfg.patience:
            break

    return best[2], {"train_loss": train_loss, "val_loss": val_loss, "best_epoch": best[1]}


def infer(model: MLPModel, feature):
    """Class probabilities and label for one feature vector."""
    f = np.asarray(feature, dtype=float)
    if f.ndim != 1:
        raise ValueError("expected a single feature vector")
    probs = model.predict_proba(f)[0]
    return probs, int(np.argmax(probs))
