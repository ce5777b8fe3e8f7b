"""One-hidden-layer dense networks with a softmax or sigmoid head."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .exceptions import ConfigError, DataError

HEAD_SOFTMAX = "softmax"
HEAD_SIGMOID = "sigmoid"
ACTIVATIONS = ("relu", "tanh")


@dataclass
class MlpModel:
    """Parameters of a one-hidden-layer network.

    hidden_weights (N, d), hidden_biases (N,), output_weights (out, N),
    output_biases (out,). A sigmoid head has exactly one output row; a
    softmax head has one row per fine class.
    """

    hidden_weights: np.ndarray
    hidden_biases: np.ndarray
    output_weights: np.ndarray
    output_biases: np.ndarray
    head: str = HEAD_SOFTMAX
    activation: str = "relu"

    def __post_init__(self):
        if self.head not in (HEAD_SOFTMAX, HEAD_SIGMOID):
            raise ConfigError(f"unknown head {self.head!r}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}")
        n, d = self.hidden_weights.shape
        out = self.output_weights.shape[0]
        if self.hidden_biases.shape != (n,) or self.output_weights.shape != (out, n):
            raise ConfigError("parameter shapes are inconsistent")
        if self.output_biases.shape != (out,):
            raise ConfigError("output bias shape is inconsistent")
        if self.head == HEAD_SIGMOID and out != 1:
            raise ConfigError(f"sigmoid head needs exactly 1 output row, got {out}")
        if self.head == HEAD_SOFTMAX and out < 2:
            raise ConfigError(f"softmax head needs at least 2 output rows, got {out}")
        for arr in (self.hidden_weights, self.hidden_biases, self.output_weights, self.output_biases):
            if not np.all(np.isfinite(arr)):
                raise ConfigError("model parameters must be finite")

    @property
    def input_dim(self) -> int:
        return self.hidden_weights.shape[1]

    @property
    def hidden_count(self) -> int:
        return self.hidden_weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.output_weights.shape[0]

    def copy(self) -> "MlpModel":
        return replace(
            self,
            hidden_weights=self.hidden_weights.copy(),
            hidden_biases=self.hidden_biases.copy(),
            output_weights=self.output_weights.copy(),
            output_biases=self.output_biases.copy(),
        )


@dataclass
class ForwardTrace:
    """Everything a backward pass needs: inputs, hidden activations,
    output preactivations, and head outputs."""

    inputs: np.ndarray
    hidden: np.ndarray
    preactivations: np.ndarray
    outputs: np.ndarray


def glorot_init(d: int, n_hidden: int, out_dim: int, seed: int, activation: str = "relu") -> MlpModel:
    """Glorot-uniform weights, zero biases, deterministic in the seed.

    Each weight layer is drawn from U[-L, L] with L = sqrt(6 / (fan_in + fan_out)).
    """
    if d < 1 or n_hidden < 1 or out_dim < 1:
        raise ConfigError(f"dimensions must be >= 1, got d={d} N={n_hidden} out={out_dim}")
    rng = np.random.default_rng(seed)
    lim_hidden = np.sqrt(6.0 / (d + n_hidden))
    lim_out = np.sqrt(6.0 / (n_hidden + out_dim))
    return MlpModel(
        hidden_weights=rng.uniform(-lim_hidden, lim_hidden, (n_hidden, d)),
        hidden_biases=np.zeros(n_hidden),
        output_weights=rng.uniform(-lim_out, lim_out, (out_dim, n_hidden)),
        output_biases=np.zeros(out_dim),
        head=HEAD_SIGMOID if out_dim == 1 else HEAD_SOFTMAX,
        activation=activation,
    )


def softmax(u: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction for overflow safety."""
    shifted = u - u.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def sigmoid(u: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(u, dtype=float)
    pos = u >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
    eu = np.exp(u[~pos])
    out[~pos] = eu / (1.0 + eu)
    return out


def _hidden_activations(model: MlpModel, x: np.ndarray) -> np.ndarray:
    pre = x @ model.hidden_weights.T + model.hidden_biases
    if model.activation == "relu":
        return np.maximum(pre, 0.0)
    return np.tanh(pre)


def forward(model: MlpModel, x: np.ndarray) -> ForwardTrace:
    """Full forward pass, keeping intermediates for backprop."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise DataError(
            f"input must be (batch, {model.input_dim}), got {x.shape}"
        )
    if not np.all(np.isfinite(x)):
        raise DataError("input contains non-finite entries")
    hidden = _hidden_activations(model, x)
    pre = hidden @ model.output_weights.T + model.output_biases
    if model.head == HEAD_SOFTMAX:
        outputs = softmax(pre)
    else:
        outputs = sigmoid(pre)
    return ForwardTrace(inputs=x, hidden=hidden, preactivations=pre, outputs=outputs)


def predict_probs(model: MlpModel, x: np.ndarray, chunk: int = 8192) -> np.ndarray:
    """Head outputs only, computed in chunks to bound memory on large sets."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] <= chunk:
        return forward(model, x).outputs
    parts = [forward(model, x[i : i + chunk]).outputs for i in range(0, x.shape[0], chunk)]
    return np.vstack(parts)


def parameter_count(model: MlpModel) -> int:
    """N*(d+1) + out*(N+1), every trainable scalar counted once."""
    n, d = model.hidden_weights.shape
    out = model.out_dim
    return n * (d + 1) + out * (n + 1)


def match_capacity(n_fine: int, d: int, k: int) -> int:
    """Hidden width giving a 1-output head the parameter count of a K-output one.

    Solves M*(d+2) + 1 = N*(d+1) + K*(N+1) for M and rounds to the nearest
    integer (half away from zero), so the two counts differ by at most d+2.
    """
    if n_fine < 1 or d < 1 or k < 1:
        raise ConfigError("match_capacity arguments must be >= 1")
    exact = (n_fine * (d + 1 + k) + k - 1) / (d + 2)
    return max(1, int(np.floor(exact + 0.5)))
