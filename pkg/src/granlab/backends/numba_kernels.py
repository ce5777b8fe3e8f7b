"""Numba-compiled twins of the numpy training kernels.

Same contract as numpy_kernels (see its docstring). Matrix products go
through np.dot; row-wise pieces (activations, softmax, output deltas) are
explicit loops, which numba fuses without temporaries. nogil lets the
harness run replicates in parallel threads.
"""

import numpy as np
from numba import njit

from ..losses import PROB_FLOOR

NAME = "numba"

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def _hidden(xb, w1, b1, act_id):
    h = xb @ w1.T
    for i in range(h.shape[0]):
        for j in range(h.shape[1]):
            v = h[i, j] + b1[j]
            if act_id == 0:
                h[i, j] = v if v > 0.0 else 0.0
            else:
                h[i, j] = np.tanh(v)
    return h


@njit(**_JIT)
def _head_probs(hidden, w2, b2, head_id):
    u = hidden @ w2.T
    if head_id == 0:
        for i in range(u.shape[0]):
            mx = u[i, 0] + b2[0]
            for k in range(u.shape[1]):
                u[i, k] += b2[k]
                if u[i, k] > mx:
                    mx = u[i, k]
            total = 0.0
            for k in range(u.shape[1]):
                u[i, k] = np.exp(u[i, k] - mx)
                total += u[i, k]
            for k in range(u.shape[1]):
                u[i, k] /= total
    else:
        for i in range(u.shape[0]):
            v = u[i, 0] + b2[0]
            if v >= 0.0:
                u[i, 0] = 1.0 / (1.0 + np.exp(-v))
            else:
                ev = np.exp(v)
                u[i, 0] = ev / (1.0 + ev)
    return u


@njit(**_JIT)
def _output_delta(probs, tb, c0_mask, head_id, loss_id, beta):
    m = probs.shape[0]
    delta = np.empty_like(probs)
    if head_id == 1:  # sigmoid + binary cross-entropy
        for i in range(m):
            delta[i, 0] = (probs[i, 0] - tb[i, 0]) / m
        return delta
    k = probs.shape[1]
    for i in range(m):
        if loss_id == 1:  # fine cross-entropy
            for j in range(k):
                delta[i, j] = (probs[i, j] - tb[i, j]) / m
            continue
        in_c0 = 0.0
        for j in range(k):
            in_c0 += tb[i, j] * c0_mask[j]
        s = 0.0
        for j in range(k):
            side = c0_mask[j] if in_c0 > 0.5 else 1.0 - c0_mask[j]
            s += probs[i, j] * side
        if s < PROB_FLOOR:
            s = PROB_FLOOR
        for j in range(k):
            side = c0_mask[j] if in_c0 > 0.5 else 1.0 - c0_mask[j]
            coarse = probs[i, j] * (1.0 - side / s)
            if loss_id == 0:
                delta[i, j] = coarse / m
            elif loss_id == 2:
                delta[i, j] = (probs[i, j] * side / s - tb[i, j]) / m
            else:
                intra = probs[i, j] * side / s - tb[i, j]
                delta[i, j] = (coarse + beta * intra) / m
    return delta


@njit(**_JIT)
def _batch_grads(w1, b1, w2, b2, xb, tb, c0_mask, act_id, head_id, loss_id, beta):
    hidden = _hidden(xb, w1, b1, act_id)
    probs = _head_probs(hidden, w2, b2, head_id)
    delta = _output_delta(probs, tb, c0_mask, head_id, loss_id, beta)
    dw2 = delta.T @ hidden
    db2 = delta.sum(axis=0)
    dh = delta @ w2
    for i in range(dh.shape[0]):
        for j in range(dh.shape[1]):
            if act_id == 0:
                if hidden[i, j] <= 0.0:
                    dh[i, j] = 0.0
            else:
                dh[i, j] *= 1.0 - hidden[i, j] * hidden[i, j]
    dw1 = dh.T @ xb
    db1 = dh.sum(axis=0)
    return dw1, db1, dw2, db2


@njit(**_JIT)
def sgd_epoch(w1, b1, w2, b2, x, targets, c0_mask, order, batch_size, lr,
              act_id, head_id, loss_id, beta):
    n = order.shape[0]
    start = 0
    while start < n:
        stop = min(start + batch_size, n)
        idx = order[start:stop]
        dw1, db1, dw2, db2 = _batch_grads(
            w1, b1, w2, b2, x[idx], targets[idx], c0_mask, act_id, head_id, loss_id, beta
        )
        w1 -= lr * dw1
        b1 -= lr * db1
        w2 -= lr * dw2
        b2 -= lr * db2
        start = stop


@njit(**_JIT)
def _adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    flat_p = param.ravel()
    flat_g = grad.ravel()
    flat_m = m.ravel()
    flat_v = v.ravel()
    for i in range(flat_p.shape[0]):
        g = flat_g[i]
        flat_m[i] = beta1 * flat_m[i] + (1.0 - beta1) * g
        flat_v[i] = beta2 * flat_v[i] + (1.0 - beta2) * g * g
        flat_p[i] -= lr * (flat_m[i] / c1) / (np.sqrt(flat_v[i] / c2) + eps)


@njit(**_JIT)
def adam_epoch(w1, b1, w2, b2, moments, step, x, targets, c0_mask, order,
               batch_size, lr, beta1, beta2, eps, act_id, head_id, loss_id, beta):
    mw1, vw1, mb1, vb1, mw2, vw2, mb2, vb2 = moments
    n = order.shape[0]
    start = 0
    while start < n:
        stop = min(start + batch_size, n)
        idx = order[start:stop]
        dw1, db1, dw2, db2 = _batch_grads(
            w1, b1, w2, b2, x[idx], targets[idx], c0_mask, act_id, head_id, loss_id, beta
        )
        step += 1
        _adam_update(w1, dw1, mw1, vw1, lr, beta1, beta2, eps, step)
        _adam_update(b1, db1, mb1, vb1, lr, beta1, beta2, eps, step)
        _adam_update(w2, dw2, mw2, vw2, lr, beta1, beta2, eps, step)
        _adam_update(b2, db2, mb2, vb2, lr, beta1, beta2, eps, step)
        start = stop
    return step
