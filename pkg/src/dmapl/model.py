"""The prediction model: ReLU-MLP encoder, linear bottleneck, linear classifier.

Forward, hand-derived backprop, SGD with momentum and decoupled weight decay,
and the cosine learning-rate schedule. Parameters live in a flat name->array
dict so the optimizer and serialization stay simple. Weight decay applies to
weight matrices only, never biases.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .numkit import DmaplError, softmax


class DivergenceError(DmaplError):
    """A non-finite gradient or loss showed up during training."""


class ModelFormatError(DmaplError):
    """Model file does not parse or does not match the expected architecture."""


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden_dims: tuple[int, ...]
    bottleneck_dim: int
    num_classes: int

    def __post_init__(self) -> None:
        dims = (self.input_dim, *self.hidden_dims, self.bottleneck_dim, self.num_classes)
        if any(d < 1 for d in dims):
            raise ValueError("all layer dims must be >= 1")


def _glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class Model:
    """f = classifier(bottleneck(encoder(x))).

    encoder: Linear+ReLU per hidden dim; bottleneck and classifier are bare
    linear layers. `forward` returns the bottleneck features (the vectors the
    prototypical machinery normalizes), the logits, and row-wise softmax probs.
    """

    FORMAT_VERSION = 1

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray]):
        self.config = config
        self.params = params

    @classmethod
    def init(cls, config: ModelConfig, rng: np.random.Generator) -> "Model":
        """Glorot-uniform weights, zero biases, drawn from the given rng."""
        params: dict[str, np.ndarray] = {}
        prev = config.input_dim
        for i, width in enumerate(config.hidden_dims):
            params[f"enc{i}.W"] = _glorot(prev, width, rng)
            params[f"enc{i}.b"] = np.zeros(width)
            prev = width
        params["bottleneck.W"] = _glorot(prev, config.bottleneck_dim, rng)
        params["bottleneck.b"] = np.zeros(config.bottleneck_dim)
        params["classifier.W"] = _glorot(config.bottleneck_dim, config.num_classes, rng)
        params["classifier.b"] = np.zeros(config.num_classes)
        return cls(config, params)

    def copy(self) -> "Model":
        return Model(self.config, {k: v.copy() for k, v in self.params.items()})

    @property
    def param_names(self) -> list[str]:
        return list(self.params.keys())

    def _trace(self, batch: np.ndarray):
        """Forward pass keeping pre-activations and activations for backprop."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ValueError(
                f"batch shape {x.shape} does not match input dim {self.config.input_dim}")
        activations = [x]
        preacts = []
        a = x
        for i in range(len(self.config.hidden_dims)):
            h = a @ self.params[f"enc{i}.W"] + self.params[f"enc{i}.b"]
            preacts.append(h)
            a = np.maximum(h, 0.0)
            activations.append(a)
        features = a @ self.params["bottleneck.W"] + self.params["bottleneck.b"]
        logits = features @ self.params["classifier.W"] + self.params["classifier.b"]
        return activations, preacts, features, logits

    def forward(self, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (features, logits, probs) for a (n, input_dim) batch."""
        _, _, features, logits = self._trace(batch)
        return features, logits, softmax(logits, axis=1)

    def backward(self, batch: np.ndarray, loss_grad_on_logits: np.ndarray) -> dict[str, np.ndarray]:
        """Exact gradients of the forward computation w.r.t. every parameter.

        `loss_grad_on_logits` is dLoss/dlogits for the same batch (already
        carrying any batch-mean normalization). ReLU subgradient at 0 is 0.
        """
        activations, preacts, features, logits = self._trace(batch)
        g = np.asarray(loss_grad_on_logits, dtype=np.float64)
        if g.shape != logits.shape:
            raise ValueError(f"loss gradient shape {g.shape} does not match logits {logits.shape}")
        grads: dict[str, np.ndarray] = {}
        grads["classifier.W"] = features.T @ g
        grads["classifier.b"] = g.sum(axis=0)
        d = g @ self.params["classifier.W"].T
        grads["bottleneck.W"] = activations[-1].T @ d
        grads["bottleneck.b"] = d.sum(axis=0)
        d = d @ self.params["bottleneck.W"].T
        for i in reversed(range(len(self.config.hidden_dims))):
            d = d * (preacts[i] > 0)
            grads[f"enc{i}.W"] = activations[i].T @ d
            grads[f"enc{i}.b"] = d.sum(axis=0)
            d = d @ self.params[f"enc{i}.W"].T
        return grads

    def predict(self, batch: np.ndarray) -> np.ndarray:
        """Argmax class per row; ties go to the lowest class index."""
        _, logits, _ = self.forward(batch)
        return logits.argmax(axis=1)


def cosine_lr(t: int, total_steps: int, eta_0: float, eta_1: float) -> float:
    """eta_1 + 0.5 (eta_0 - eta_1)(1 + cos(t pi / N)); t past N clamps to eta_1."""
    if total_steps < 1:
        raise ValueError("total_steps must be >= 1")
    if not (eta_0 >= eta_1 > 0):
        raise ValueError("need eta_0 >= eta_1 > 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t > total_steps:
        warnings.warn("cosine_lr called past the schedule end; clamping to eta_1")
        return eta_1
    # endpoints returned exactly (cos(0)=1, cos(pi)=-1 make the formula collapse)
    if t == 0:
        return eta_0
    if t == total_steps:
        return eta_1
    return eta_1 + 0.5 * (eta_0 - eta_1) * (1.0 + math.cos(t * math.pi / total_steps))


class SgdMomentum:
    """SGD with momentum, decoupled weight decay on weights, cosine LR schedule.

    velocity <- momentum * velocity + (grad + weight_decay * param)
    param    <- param - lr(t) * velocity

    `encoder_lr_scale` keeps the two-parameter-group option (backbone vs head)
    available in configs; 1.0 collapses to a single group.
    """

    def __init__(self, model: Model, momentum: float = 0.9, weight_decay: float = 1e-3,
                 eta_0: float = 1e-2, eta_1: float = 1e-3, total_steps: int = 1,
                 encoder_lr_scale: float = 1.0):
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.eta_0 = eta_0
        self.eta_1 = eta_1
        self.total_steps = total_steps
        self.encoder_lr_scale = encoder_lr_scale
        self.velocity = {k: np.zeros_like(v) for k, v in model.params.items()}

    def lr_at(self, t: int) -> float:
        return cosine_lr(min(t, self.total_steps), self.total_steps, self.eta_0, self.eta_1)

    def step(self, model: Model, grads: dict[str, np.ndarray], t: int) -> None:
        lr = self.lr_at(t)
        for name, param in model.params.items():
            grad = grads[name]
            if not np.all(np.isfinite(grad)):
                raise DivergenceError(f"divergence detected in parameter block '{name}'")
            decay = self.weight_decay if name.endswith(".W") else 0.0
            self.velocity[name] = self.momentum * self.velocity[name] + (grad + decay * param)
            scale = self.encoder_lr_scale if name.startswith("enc") else 1.0
            param -= lr * scale * self.velocity[name]


def save_model(model: Model, path: str) -> None:
    """Versioned plain-text dump: header, then parameters in declared order
    at 17 significant digits (exact float64 round trip)."""
    cfg = model.config
    with open(path, "w") as fh:
        fh.write(f"dmapl-model v{Model.FORMAT_VERSION}\n")
        fh.write(f"input_dim {cfg.input_dim}\n")
        hidden = ",".join(str(h) for h in cfg.hidden_dims)
        fh.write(f"hidden_dims {hidden}\n")
        fh.write(f"bottleneck_dim {cfg.bottleneck_dim}\n")
        fh.write(f"num_classes {cfg.num_classes}\n")
        fh.write("activation relu\n")
        for name, arr in model.params.items():
            rows, cols = (arr.shape if arr.ndim == 2 else (1, arr.shape[0]))
            fh.write(f"param {name} {rows} {cols}\n")
            flat = arr.reshape(rows, cols)
            for r in range(rows):
                fh.write(" ".join(f"{v:.17g}" for v in flat[r]) + "\n")


def load_model(path: str, expected_config: ModelConfig | None = None) -> Model:
    """Read a save_model file back. With `expected_config`, the architecture
    must match exactly or a ModelFormatError is raised."""
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("dmapl-model v"):
        raise ModelFormatError(f"{path}: not a model file")
    version = lines[0].removeprefix("dmapl-model v")
    if version != str(Model.FORMAT_VERSION):
        raise ModelFormatError(f"{path}: unsupported format version {version!r}")

    header: dict[str, str] = {}
    i = 1
    while i < len(lines) and not lines[i].startswith("param "):
        key, _, value = lines[i].partition(" ")
        header[key] = value
        i += 1
    try:
        hidden_raw = header["hidden_dims"]
        config = ModelConfig(
            input_dim=int(header["input_dim"]),
            hidden_dims=tuple(int(h) for h in hidden_raw.split(",") if h),
            bottleneck_dim=int(header["bottleneck_dim"]),
            num_classes=int(header["num_classes"]),
        )
    except (KeyError, ValueError) as exc:
        raise ModelFormatError(f"{path}: bad header ({exc})") from None
    if header.get("activation", "relu") != "relu":
        raise ModelFormatError(f"{path}: unsupported activation {header.get('activation')!r}")
    if expected_config is not None and config != expected_config:
        raise ModelFormatError(f"{path}: architecture {config} does not match expected {expected_config}")

    params: dict[str, np.ndarray] = {}
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "param":
            raise ModelFormatError(f"{path}: line {i + 1}: expected a param header")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        data = []
        for r in range(rows):
            i += 1
            if i >= len(lines):
                raise ModelFormatError(f"{path}: truncated parameter block '{name}'")
            try:
                data.append([float(v) for v in lines[i].split()])
            except ValueError:
                raise ModelFormatError(f"{path}: line {i + 1}: bad float") from None
            if len(data[-1]) != cols:
                raise ModelFormatError(f"{path}: line {i + 1}: expected {cols} values")
        arr = np.asarray(data, dtype=np.float64)
        params[name] = arr[0] if name.endswith(".b") else arr
        i += 1

    reference = Model.init(config, np.random.default_rng(0))
    if list(params.keys()) != reference.param_names:
        raise ModelFormatError(
            f"{path}: parameter blocks {list(params.keys())} do not match architecture {reference.param_names}")
    for name, ref in reference.params.items():
        if params[name].shape != ref.shape:
            raise ModelFormatError(
                f"{path}: parameter '{name}' has shape {params[name].shape}, expected {ref.shape}")
    return Model(config, params)
