"""Shared test helpers: random problem builders and the finite-difference
gradient oracle used by both the unit tests and the acceptance suite."""

import os

import numpy as np
import pytest

from granlab.dataset import LabeledDataset, one_hot
from granlab.losses import Hierarchy, evaluate_loss, loss_coarse
from granlab.model import HEAD_SIGMOID, forward, glorot_init


def random_hierarchy(rng, k):
    """Random two-group partition of k classes, both groups non-empty."""
    size = int(rng.integers(1, k))
    c0 = rng.choice(k, size=size, replace=False)
    c1 = [i for i in range(k) if i not in set(c0.tolist())]
    return Hierarchy(k, tuple(int(i) for i in c0), tuple(c1))


def random_probs(rng, batch, k, scale=2.0):
    """Exactly normalized rows, spread out like softmax outputs."""
    logits = rng.normal(0.0, scale, (batch, k))
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def random_onehot(rng, batch, k):
    return one_hot(rng.integers(0, k, batch), k)


def toy_separable(n_per_class=10, seed=3, k=2):
    """Two well-separated blobs; coarse task is linearly separable."""
    rng = np.random.default_rng(seed)
    x = np.vstack([rng.normal(c * 4.0 - 2.0, 0.3, (n_per_class, 2)) for c in range(k)])
    labels = np.repeat(np.arange(k), n_per_class)
    half = k // 2 or 1
    hierarchy = Hierarchy(k, tuple(range(half)), tuple(range(half, k)))
    return LabeledDataset(x, one_hot(labels, k), hierarchy, "toy", [f"c{i}" for i in range(k)])


def batch_loss(model, x, targets, loss, hierarchy):
    """Loss value as a function of the model parameters, for FD probing."""
    outputs = forward(model, x).outputs
    if model.head == HEAD_SIGMOID:
        return loss_coarse(outputs[:, 0], targets)
    return evaluate_loss(outputs, targets, hierarchy, loss)


def numerical_gradients(model, x, targets, loss, hierarchy, h=1e-5):
    """Central finite differences of the mean batch loss, every parameter."""
    grads = []
    for params in (model.hidden_weights, model.hidden_biases,
                   model.output_weights, model.output_biases):
        num = np.zeros_like(params)
        it = np.nditer(params, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = params[i]
            params[i] = orig + h
            plus = batch_loss(model, x, targets, loss, hierarchy)
            params[i] = orig - h
            minus = batch_loss(model, x, targets, loss, hierarchy)
            params[i] = orig
            num[i] = (plus - minus) / (2.0 * h)
        grads.append(num)
    return grads


def relative_gradient_error(analytic, numeric):
    """Worst per-tensor max-norm relative error."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(np.abs(a).max(), np.abs(n).max(), 1e-12)
        worst = max(worst, float(np.abs(a - n).max() / scale))
    return worst


def draw_fd_point(rng, d, n_hidden, out_dim, batch, activation, margin=1e-3):
    """Model + batch whose hidden preactivations stay away from the ReLU
    kink, so central differences are valid."""
    for _ in range(64):
        seed = int(rng.integers(0, 2**32))
        model = glorot_init(d, n_hidden, out_dim, seed, activation)
        x = rng.normal(0.0, 1.0, (batch, d))
        pre = x @ model.hidden_weights.T + model.hidden_biases
        if np.abs(pre).min() > margin:
            return model, x
    raise AssertionError("could not find a kink-free evaluation point")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(autouse=True)
def _default_backend(monkeypatch):
    """Tests run on the default backend unless they set one themselves."""
    monkeypatch.delenv("GRANLAB_BACKEND", raising=False)
    yield


def data_dir_or_none():
    """Directory with the real dataset files, when the user provides one."""
    path = os.environ.get("GRANLAB_DATA_DIR")
    return path if path and os.path.isdir(path) else None
