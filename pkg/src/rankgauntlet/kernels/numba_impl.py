"""Numba-jitted hot kernels; same contracts as ``numpy_impl``."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _layer_mask_flat(flat_scores, t):
    idx = np.argsort(flat_scores, kind="mergesort")
    mask = np.zeros(flat_scores.size, dtype=np.float64)
    for k in range(t, flat_scores.size):
        mask[idx[k]] = 1.0
    return mask


@njit(cache=True)
def ep_sgd(
    weights,
    scores,
    velocity,
    dims,
    t_arr,
    X,
    y,
    batch_idx,
    batch_bounds,
    lr,
    momentum,
    weight_decay,
    grad_scale,
):
    n_layers = dims.size - 1
    pad = weights.shape[1]
    for b in range(batch_bounds.size - 1):
        lo, hi = batch_bounds[b], batch_bounds[b + 1]
        bsz = hi - lo
        batch = np.empty((bsz, dims[0]), dtype=np.float64)
        labels = np.empty(bsz, dtype=np.int64)
        for r in range(bsz):
            src = batch_idx[lo + r]
            labels[r] = y[src]
            for c in range(dims[0]):
                batch[r, c] = X[src, c]

        acts = np.zeros((n_layers + 1, bsz, pad), dtype=np.float64)
        pre = np.zeros((n_layers, bsz, pad), dtype=np.float64)
        masked = np.zeros((n_layers, pad, pad), dtype=np.float64)
        acts[0, :, : dims[0]] = batch

        for l in range(n_layers):
            fan_in, fan_out = dims[l], dims[l + 1]
            flat = np.empty(fan_in * fan_out, dtype=np.float64)
            for i in range(fan_in):
                for j in range(fan_out):
                    flat[i * fan_out + j] = scores[l, i, j]
            mflat = _layer_mask_flat(flat, t_arr[l])
            for i in range(fan_in):
                for j in range(fan_out):
                    masked[l, i, j] = weights[l, i, j] * mflat[i * fan_out + j]
            h = np.ascontiguousarray(acts[l, :, :fan_in])
            wm = np.ascontiguousarray(masked[l, :fan_in, :fan_out])
            z = np.dot(h, wm)
            pre[l, :, :fan_out] = z
            if l < n_layers - 1:
                acts[l + 1, :, :fan_out] = np.maximum(z, 0.0)
            else:
                acts[l + 1, :, :fan_out] = z

        n_classes = dims[n_layers]
        grad_z = np.empty((bsz, n_classes), dtype=np.float64)
        for r in range(bsz):
            row_max = acts[n_layers, r, 0]
            for c in range(1, n_classes):
                if acts[n_layers, r, c] > row_max:
                    row_max = acts[n_layers, r, c]
            denom = 0.0
            for c in range(n_classes):
                grad_z[r, c] = np.exp(acts[n_layers, r, c] - row_max)
                denom += grad_z[r, c]
            for c in range(n_classes):
                grad_z[r, c] /= denom
            grad_z[r, labels[r]] -= 1.0
            for c in range(n_classes):
                grad_z[r, c] /= bsz

        for l in range(n_layers - 1, -1, -1):
            fan_in, fan_out = dims[l], dims[l + 1]
            h = np.ascontiguousarray(acts[l, :, :fan_in])
            d_eff = np.dot(h.T, grad_z)
            for i in range(fan_in):
                for j in range(fan_out):
                    g = (
                        grad_scale * d_eff[i, j] * weights[l, i, j]
                        + weight_decay * scores[l, i, j]
                    )
                    velocity[l, i, j] = momentum * velocity[l, i, j] + g
                    scores[l, i, j] -= lr * velocity[l, i, j]
            if l > 0:
                wm = np.ascontiguousarray(masked[l, :fan_in, :fan_out])
                grad_h = np.dot(grad_z, wm.T)
                prev_out = dims[l]
                new_grad = np.empty((bsz, prev_out), dtype=np.float64)
                for r in range(bsz):
                    for c in range(prev_out):
                        new_grad[r, c] = grad_h[r, c] if pre[l - 1, r, c] > 0.0 else 0.0
                grad_z = new_grad


@njit(cache=True)
def masked_forward(weights, scores, dims, t_arr, X):
    n_layers = dims.size - 1
    h = np.ascontiguousarray(X)
    for l in range(n_layers):
        fan_in, fan_out = dims[l], dims[l + 1]
        flat = np.empty(fan_in * fan_out, dtype=np.float64)
        for i in range(fan_in):
            for j in range(fan_out):
                flat[i * fan_out + j] = scores[l, i, j]
        mflat = _layer_mask_flat(flat, t_arr[l])
        wm = np.empty((fan_in, fan_out), dtype=np.float64)
        for i in range(fan_in):
            for j in range(fan_out):
                wm[i, j] = weights[l, i, j] * mflat[i * fan_out + j]
        z = np.dot(h, wm)
        if l < n_layers - 1:
            h = np.maximum(z, 0.0)
        else:
            h = z
    return h


@njit(cache=True)
def sinkhorn_log_forward(logits, n_iter):
    # stages hold stage probabilities, not logs: the backward pass then
    # involves no transcendental calls at all.  Column stages are traversed
    # row-major with accumulator vectors to stay cache-friendly.
    d = logits.shape[0]
    z = logits.astype(np.float64).copy()
    stages = np.empty((n_iter, 2, d, d), dtype=np.float64)
    col_acc = np.empty(d, dtype=np.float64)
    for l in range(n_iter):
        for i in range(d):
            row_max = z[i, 0]
            for j in range(1, d):
                if z[i, j] > row_max:
                    row_max = z[i, j]
            s = 0.0
            for j in range(d):
                v = np.exp(z[i, j] - row_max)
                stages[l, 0, i, j] = v
                s += v
            lse = np.log(s) + row_max
            inv = 1.0 / s
            for j in range(d):
                z[i, j] -= lse
                stages[l, 0, i, j] *= inv
        for j in range(d):
            col_acc[j] = z[0, j]
        for i in range(1, d):
            for j in range(d):
                if z[i, j] > col_acc[j]:
                    col_acc[j] = z[i, j]
        col_sum = np.zeros(d, dtype=np.float64)
        for i in range(d):
            for j in range(d):
                v = np.exp(z[i, j] - col_acc[j])
                stages[l, 1, i, j] = v
                col_sum[j] += v
        for j in range(d):
            col_acc[j] = np.log(col_sum[j]) + col_acc[j]
            col_sum[j] = 1.0 / col_sum[j]
        for i in range(d):
            for j in range(d):
                z[i, j] -= col_acc[j]
                stages[l, 1, i, j] *= col_sum[j]
    return stages[n_iter - 1, 1].copy(), stages


@njit(cache=True)
def sinkhorn_log_backward(stages, grad_p):
    n_iter = stages.shape[0]
    d = grad_p.shape[0]
    u = grad_p * stages[n_iter - 1, 1]
    col_sum = np.empty(d, dtype=np.float64)
    for l in range(n_iter - 1, -1, -1):
        for j in range(d):
            col_sum[j] = 0.0
        for i in range(d):
            for j in range(d):
                col_sum[j] += u[i, j]
        for i in range(d):
            for j in range(d):
                u[i, j] -= stages[l, 1, i, j] * col_sum[j]
        for i in range(d):
            row_sum = 0.0
            for j in range(d):
                row_sum += u[i, j]
            for j in range(d):
                u[i, j] -= stages[l, 0, i, j] * row_sum
    return u


@njit(cache=True)
def solve_assignment_min(cost):
    n = cost.shape[0]
    u = np.zeros(n + 1, dtype=np.float64)
    v = np.zeros(n + 1, dtype=np.float64)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    row_to_col = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        row_to_col[p[j] - 1] = j - 1
    return row_to_col
