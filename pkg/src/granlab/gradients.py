"""Analytic backpropagation for every objective.

The output-layer deltas below are exact derivatives of the floored losses
away from the floor:

  fine:    dL/du_k = p_k - y_k
  coarse:  dL/du_k = p_k - p_k * s_k / S        (softmax head via aggregation)
  intra:   dL/du_k = p_k * s_k / S - y_k
  hybrid:  coarse + beta * intra

where s is the indicator of the coarse group containing the true class and
S = sum_{j in that group} p_j. For the sigmoid head, dL/du = sigma(u) - Y.
All deltas are per-sample; callers divide by the batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigError, DataError
from .losses import PROB_FLOOR, Hierarchy, LossKind
from .model import HEAD_SIGMOID, HEAD_SOFTMAX, ForwardTrace, MlpModel

# Integer codes shared with the training kernels.
LOSS_IDS = {"coarse": 0, "fine": 1, "intra": 2, "hybrid": 3}
ACT_IDS = {"relu": 0, "tanh": 1}
HEAD_IDS = {HEAD_SOFTMAX: 0, HEAD_SIGMOID: 1}


@dataclass
class Gradients:
    hidden_weights: np.ndarray
    hidden_biases: np.ndarray
    output_weights: np.ndarray
    output_biases: np.ndarray

    def tensors(self):
        return (self.hidden_weights, self.hidden_biases, self.output_weights, self.output_biases)


def softmax_delta(probs: np.ndarray, onehot: np.ndarray, c0_mask: np.ndarray,
                  loss_id: int, beta: float) -> np.ndarray:
    """Per-sample dL/d(output preactivation) for a softmax head."""
    if loss_id == LOSS_IDS["fine"]:
        return probs - onehot
    in_c0 = onehot @ c0_mask
    side = np.where(in_c0[:, None] > 0.5, c0_mask[None, :], 1.0 - c0_mask[None, :])
    s = np.maximum((probs * side).sum(axis=1), PROB_FLOOR)[:, None]
    coarse = probs * (1.0 - side / s)
    if loss_id == LOSS_IDS["coarse"]:
        return coarse
    intra = probs * side / s - onehot
    if loss_id == LOSS_IDS["intra"]:
        return intra
    return coarse + beta * intra


def backward(model: MlpModel, trace: ForwardTrace, targets: np.ndarray,
             loss: LossKind, hierarchy: Hierarchy | None = None) -> Gradients:
    """Gradient of the selected mean-batch loss for every parameter tensor.

    For a softmax head, targets are one-hot fine labels; coarse, intra and
    hybrid losses additionally need the hierarchy. For a sigmoid head the
    loss must be coarse and targets are binary coarse labels.
    """
    batch = trace.inputs.shape[0]
    if batch == 0:
        raise DataError("empty batch")
    if model.head == HEAD_SIGMOID:
        if loss.kind != "coarse":
            raise ConfigError(f"sigmoid head only supports the coarse loss, got {loss.kind!r}")
        y = np.asarray(targets, dtype=float).reshape(batch, 1)
        delta = (trace.outputs - y) / batch
    else:
        onehot = np.asarray(targets, dtype=float)
        if onehot.shape != trace.outputs.shape:
            raise DataError(
                f"targets shape {onehot.shape} does not match outputs {trace.outputs.shape}"
            )
        if loss.kind != "fine" and hierarchy is None:
            raise ConfigError(f"loss kind {loss.kind!r} on a softmax head needs a hierarchy")
        if hierarchy is not None and hierarchy.k != model.out_dim:
            raise ConfigError(
                f"hierarchy k={hierarchy.k} does not match model outputs {model.out_dim}"
            )
        mask = hierarchy.c0_mask() if hierarchy is not None else np.zeros(model.out_dim)
        delta = softmax_delta(trace.outputs, onehot, mask, LOSS_IDS[loss.kind], loss.beta) / batch

    d_out_w = delta.T @ trace.hidden
    d_out_b = delta.sum(axis=0)
    d_hidden = delta @ model.output_weights
    if model.activation == "relu":
        d_hidden = d_hidden * (trace.hidden > 0.0)
    else:
        d_hidden = d_hidden * (1.0 - trace.hidden ** 2)
    d_hid_w = d_hidden.T @ trace.inputs
    d_hid_b = d_hidden.sum(axis=0)
    return Gradients(d_hid_w, d_hid_b, d_out_w, d_out_b)
