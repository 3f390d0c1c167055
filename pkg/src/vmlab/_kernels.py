"""Hot loops of the multi-task classifier, in a numba loop form and a numpy form.

Features arrive in CSR layout (``indptr``, ``indices``, ``values``) with
unique indices per row. Each head is a ``(classes, dim)`` weight matrix with a
bias vector and AdaGrad accumulators of the same shapes.
"""

from __future__ import annotations

import math

import numpy as np

from . import _accel


def _head_step_loops(W, b, G, Gb, idx, val, y, lr, eps):
    k = W.shape[0]
    logits = np.empty(k)
    for c in range(k):
        s = b[c]
        for j in range(idx.shape[0]):
            s += W[c, idx[j]] * val[j]
        logits[c] = s
    m = logits[0]
    for c in range(1, k):
        if logits[c] > m:
            m = logits[c]
    z = 0.0
    for c in range(k):
        logits[c] = math.exp(logits[c] - m)
        z += logits[c]
    loss = -math.log(logits[y] / z)
    for c in range(k):
        g = logits[c] / z
        if c == y:
            g -= 1.0
        Gb[c] += g * g
        b[c] -= lr * g / (math.sqrt(Gb[c]) + eps)
        for j in range(idx.shape[0]):
            gw = g * val[j]
            G[c, idx[j]] += gw * gw
            W[c, idx[j]] -= lr * gw / (math.sqrt(G[c, idx[j]]) + eps)
    return loss


def _adagrad_epoch_loops(order, indptr, indices, values, y_main, y_sub, Wm, bm, Gm, Gbm, Ws, bs, Gs, Gbs, lr, eps):
    total = 0.0
    for t in range(order.shape[0]):
        i = order[t]
        idx = indices[indptr[i] : indptr[i + 1]]
        val = values[indptr[i] : indptr[i + 1]]
        total += _head_step(Wm, bm, Gm, Gbm, idx, val, y_main[i], lr, eps)
        total += _head_step(Ws, bs, Gs, Gbs, idx, val, y_sub[i], lr, eps)
    return total


def _scores_loops(indptr, indices, values, W, b):
    n = indptr.shape[0] - 1
    k = W.shape[0]
    out = np.empty((n, k))
    for i in range(n):
        for c in range(k):
            s = b[c]
            for j in range(indptr[i], indptr[i + 1]):
                s += W[c, indices[j]] * values[j]
            out[i, c] = s
    return out


_head_step = _accel.njit(_head_step_loops)
adagrad_epoch_numba = _accel.njit(_adagrad_epoch_loops)
scores_numba = _accel.njit(_scores_loops)


def _head_step_numpy(W, b, G, Gb, idx, val, y, lr, eps):
    logits = W[:, idx] @ val + b
    logits -= logits.max()
    p = np.exp(logits)
    p /= p.sum()
    loss = -math.log(p[y])
    g = p
    g[y] -= 1.0
    Gb += g * g
    b -= lr * g / (np.sqrt(Gb) + eps)
    gw = np.outer(g, val)
    Gsub = G[:, idx] + gw * gw
    G[:, idx] = Gsub
    W[:, idx] -= lr * gw / (np.sqrt(Gsub) + eps)
    return loss


def adagrad_epoch_numpy(order, indptr, indices, values, y_main, y_sub, Wm, bm, Gm, Gbm, Ws, bs, Gs, Gbs, lr, eps):
    total = 0.0
    for i in order:
        lo, hi = indptr[i], indptr[i + 1]
        idx, val = indices[lo:hi], values[lo:hi]
        total += _head_step_numpy(Wm, bm, Gm, Gbm, idx, val, y_main[i], lr, eps)
        total += _head_step_numpy(Ws, bs, Gs, Gbs, idx, val, y_sub[i], lr, eps)
    return total


def scores_numpy(indptr, indices, values, W, b):
    n = indptr.shape[0] - 1
    out = np.tile(b, (n, 1))
    rows = np.repeat(np.arange(n), np.diff(indptr))
    # scatter-add of per-nonzero contributions into their rows
    np.add.at(out, rows, (W[:, indices] * values).T)
    return out


def adagrad_epoch(*args):
    if _accel.USE_NUMBA:
        return adagrad_epoch_numba(*args)
    return adagrad_epoch_numpy(*args)


def scores(indptr, indices, values, W, b):
    if _accel.USE_NUMBA:
        return scores_numba(indptr, indices, values, W, b)
    return scores_numpy(indptr, indices, values, W, b)
