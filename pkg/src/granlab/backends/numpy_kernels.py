"""Pure-numpy training kernels: the reference semantics for one epoch.

Contract shared with numba_kernels:

  sgd_epoch(w1, b1, w2, b2, x, targets, c0_mask, order, batch_size, lr,
            act_id, head_id, loss_id, beta)
  adam_epoch(w1, b1, w2, b2, moments, step, x, targets, c0_mask, order,
             batch_size, lr, beta1, beta2, eps, act_id, head_id, loss_id,
             beta) -> step

Parameter arrays (and Adam moment arrays) are updated in place. `order`
is the shuffled index vector for the epoch; batches are consecutive
slices of it, the last one possibly short. `targets` is one-hot
(n, k) for a softmax head and binary (n, 1) for a sigmoid head.
Gradients are of the mean loss over each batch.
"""

import numpy as np

from ..gradients import softmax_delta

NAME = "numpy"


def _batch_delta_and_hidden(w1, b1, w2, b2, xb, tb, c0_mask, act_id, head_id, loss_id, beta):
    pre = xb @ w1.T + b1
    hidden = np.maximum(pre, 0.0) if act_id == 0 else np.tanh(pre)
    u = hidden @ w2.T + b2
    if head_id == 0:
        shifted = u - u.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        probs = e / e.sum(axis=1, keepdims=True)
        delta = softmax_delta(probs, tb, c0_mask, loss_id, beta) / xb.shape[0]
    else:
        probs = np.empty_like(u)
        pos = u >= 0
        probs[pos] = 1.0 / (1.0 + np.exp(-u[pos]))
        eu = np.exp(u[~pos])
        probs[~pos] = eu / (1.0 + eu)
        delta = (probs - tb) / xb.shape[0]
    return delta, hidden


def _batch_grads(w1, b1, w2, b2, xb, tb, c0_mask, act_id, head_id, loss_id, beta):
    delta, hidden = _batch_delta_and_hidden(
        w1, b1, w2, b2, xb, tb, c0_mask, act_id, head_id, loss_id, beta
    )
    dw2 = delta.T @ hidden
    db2 = delta.sum(axis=0)
    dh = delta @ w2
    dh = dh * (hidden > 0.0) if act_id == 0 else dh * (1.0 - hidden ** 2)
    dw1 = dh.T @ xb
    db1 = dh.sum(axis=0)
    return dw1, db1, dw2, db2


def sgd_epoch(w1, b1, w2, b2, x, targets, c0_mask, order, batch_size, lr,
              act_id, head_id, loss_id, beta):
    n = order.shape[0]
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        dw1, db1, dw2, db2 = _batch_grads(
            w1, b1, w2, b2, x[idx], targets[idx], c0_mask, act_id, head_id, loss_id, beta
        )
        w1 -= lr * dw1
        b1 -= lr * db1
        w2 -= lr * dw2
        b2 -= lr * db2


def _adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    mhat = m / (1.0 - beta1 ** step)
    vhat = v / (1.0 - beta2 ** step)
    param -= lr * mhat / (np.sqrt(vhat) + eps)


def adam_epoch(w1, b1, w2, b2, moments, step, x, targets, c0_mask, order,
               batch_size, lr, beta1, beta2, eps, act_id, head_id, loss_id, beta):
    mw1, vw1, mb1, vb1, mw2, vw2, mb2, vb2 = moments
    n = order.shape[0]
    for start in range(0, n, batch_size):
        idx = order[start : start + batch_size]
        dw1, db1, dw2, db2 = _batch_grads(
            w1, b1, w2, b2, x[idx], targets[idx], c0_mask, act_id, head_id, loss_id, beta
        )
        step += 1
        _adam_update(w1, dw1, mw1, vw1, lr, beta1, beta2, eps, step)
        _adam_update(b1, db1, mb1, vb1, lr, beta1, beta2, eps, step)
        _adam_update(w2, dw2, mw2, vw2, lr, beta1, beta2, eps, step)
        _adam_update(b2, db2, mb2, vb2, lr, beta1, beta2, eps, step)
    return step
