"""A small embedding MLP with hand-derived reverse-mode gradients.

Affine layers with an activation between them; the final layer is linear so
embeddings cover all of R^d before normalization. Parameters are plain
float64 arrays, initialized with scaled uniform noise from a recorded seed.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch, StaleCache
from .seeds import named_rng

ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelSpec:
    """layer_widths runs input -> hidden... -> embedding dimension."""

    layer_widths: tuple
    activation: str = "relu"
    init_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if len(self.layer_widths) < 2:
            raise ValueError("layer_widths needs at least input and embedding width")
        if any(w < 1 for w in self.layer_widths):
            raise ValueError(f"widths must be positive, got {self.layer_widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.init_scale <= 0:
            raise ValueError("init_scale must be positive")

    @property
    def input_dim(self) -> int:
        return self.layer_widths[0]

    @property
    def embedding_dim(self) -> int:
        return self.layer_widths[-1]


def init_matrix(rng, fan_in: int, fan_out: int, scale: float) -> np.ndarray:
    """Scaled uniform init: U(-1, 1) * scale / sqrt(fan_in)."""
    return rng.uniform(-1.0, 1.0, size=(fan_in, fan_out)) * (scale / np.sqrt(fan_in))


class EmbeddingNet:
    """Stack of (W, b) pairs; ``params`` exposes them flat for the optimizer."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        rng = named_rng(spec.seed, "model-init")
        self.weights = []
        self.biases = []
        for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
            self.weights.append(init_matrix(rng, fan_in, fan_out, spec.init_scale))
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def params(self) -> list:
        """Alternating [W0, b0, W1, b1, ...]; mutating entries updates the net."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def set_params(self, params) -> None:
        if len(params) != 2 * self.n_layers:
            raise ShapeMismatch(f"expected {2 * self.n_layers} arrays, got {len(params)}")
        for i in range(self.n_layers):
            w, b = params[2 * i], params[2 * i + 1]
            if w.shape != self.weights[i].shape or b.shape != self.biases[i].shape:
                raise ShapeMismatch(f"layer {i} shape mismatch")
            self.weights[i] = np.asarray(w, dtype=np.float64)
            self.biases[i] = np.asarray(b, dtype=np.float64)

    def _activate(self, z):
        if self.spec.activation == "relu":
            return np.maximum(z, 0.0)
        return np.tanh(z)

    def forward(self, batch):
        """(embeddings, cache); the cache holds what backward needs."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise ShapeMismatch(
                f"batch shape {x.shape}, expected (*, {self.spec.input_dim})"
            )
        activations = [x]
        pre = []
        for i in range(self.n_layers):
            z = activations[-1] @ self.weights[i] + self.biases[i]
            pre.append(z)
            if i < self.n_layers - 1:
                activations.append(self._activate(z))
            else:
                activations.append(z)  # final layer stays linear
        return activations[-1], {"activations": activations, "pre": pre}

    def backward(self, cache, d_embeddings):
        """Gradients for every parameter, ordered like ``params``."""
        activations, pre = cache["activations"], cache["pre"]
        if len(activations) != self.n_layers + 1 or len(pre) != self.n_layers:
            raise StaleCache("cache does not match the model depth")
        d_embeddings = np.asarray(d_embeddings, dtype=np.float64)
        if d_embeddings.shape != activations[-1].shape:
            raise StaleCache(
                f"d_embeddings shape {d_embeddings.shape} vs forward output "
                f"{activations[-1].shape}"
            )
        grads = [None] * (2 * self.n_layers)
        delta = d_embeddings
        for i in range(self.n_layers - 1, -1, -1):
            if activations[i].shape[1] != self.weights[i].shape[0]:
                raise StaleCache(f"cache layer {i} width mismatch")
            grads[2 * i] = activations[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.weights[i].T
                if self.spec.activation == "relu":
                    delta = delta * (pre[i - 1] > 0.0)
                else:
                    delta = delta * (1.0 - np.tanh(pre[i - 1]) ** 2)
        return grads


def init_class_weights(n_classes: int, dim: int, init_scale: float, seed: int) -> np.ndarray:
    """Classifier weight rows, same scaled uniform scheme as the net."""
    rng = named_rng(seed, "classifier-init")
    return init_matrix(rng, dim, n_classes, init_scale).T
