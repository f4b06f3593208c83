"""Pure-numpy implementations of the hot kernels.

Reference semantics for the numba twin in ``numba_impl``; selected at import
time by the ``RANKGAUNTLET_NO_NUMBA`` environment flag.  All functions are
deterministic given their inputs.
"""

from __future__ import annotations

import numpy as np


def _layer_mask(scores_block: np.ndarray, t: int) -> np.ndarray:
    """Binary mask keeping the top-scored edges; flat C-order over the block."""
    flat = scores_block.ravel()
    idx = np.argsort(flat, kind="mergesort")
    mask = np.zeros(flat.size, dtype=np.float64)
    mask[idx[t:]] = 1.0
    return mask.reshape(scores_block.shape)


def ep_sgd(
    weights: np.ndarray,
    scores: np.ndarray,
    velocity: np.ndarray,
    dims: np.ndarray,
    t_arr: np.ndarray,
    X: np.ndarray,
    y: np.ndarray,
    batch_idx: np.ndarray,
    batch_bounds: np.ndarray,
    lr: float,
    momentum: float,
    weight_decay: float,
    grad_scale: float,
) -> None:
    """Minibatch SGD on edge scores with a straight-through masked forward pass.

    ``weights``/``scores``/``velocity`` are (L, D, D) padded stacks; layer l
    occupies the ``dims[l] x dims[l+1]`` top-left block.  Scores and velocity
    are updated in place; weights are never written.
    """
    n_layers = dims.size - 1
    n_classes = int(dims[-1])
    for b in range(batch_bounds.size - 1):
        idx = batch_idx[batch_bounds[b] : batch_bounds[b + 1]]
        batch = X[idx]
        labels = y[idx]
        bsz = idx.size

        masked = []
        acts = [batch]
        pre = []
        for l in range(n_layers):
            fan_in, fan_out = int(dims[l]), int(dims[l + 1])
            w = weights[l, :fan_in, :fan_out]
            m = _layer_mask(scores[l, :fan_in, :fan_out], int(t_arr[l]))
            wm = w * m
            z = acts[-1] @ wm
            masked.append(wm)
            pre.append(z)
            acts.append(np.maximum(z, 0.0) if l < n_layers - 1 else z)

        logits = acts[-1]
        shifted = logits - logits.max(axis=1, keepdims=True)
        expz = np.exp(shifted)
        probs = expz / expz.sum(axis=1, keepdims=True)
        grad_z = probs.copy()
        grad_z[np.arange(bsz), labels] -= 1.0
        grad_z /= bsz

        for l in range(n_layers - 1, -1, -1):
            fan_in, fan_out = int(dims[l]), int(dims[l + 1])
            d_eff = acts[l].T @ grad_z
            d_scores = d_eff * weights[l, :fan_in, :fan_out]
            g = grad_scale * d_scores + weight_decay * scores[l, :fan_in, :fan_out]
            velocity[l, :fan_in, :fan_out] = momentum * velocity[l, :fan_in, :fan_out] + g
            scores[l, :fan_in, :fan_out] -= lr * velocity[l, :fan_in, :fan_out]
            if l > 0:
                grad_h = grad_z @ masked[l].T
                grad_z = grad_h * (pre[l - 1] > 0.0)


def masked_forward(
    weights: np.ndarray,
    scores: np.ndarray,
    dims: np.ndarray,
    t_arr: np.ndarray,
    X: np.ndarray,
) -> np.ndarray:
    """Forward pass of the masked network; returns logits."""
    n_layers = dims.size - 1
    h = X
    for l in range(n_layers):
        fan_in, fan_out = int(dims[l]), int(dims[l + 1])
        wm = weights[l, :fan_in, :fan_out] * _layer_mask(
            scores[l, :fan_in, :fan_out], int(t_arr[l])
        )
        z = h @ wm
        h = np.maximum(z, 0.0) if l < n_layers - 1 else z
    return h


def sinkhorn_log_forward(logits: np.ndarray, n_iter: int) -> tuple[np.ndarray, np.ndarray]:
    """Log-domain Sinkhorn: row then column normalization per iteration.

    Returns the doubly stochastic matrix and the (n_iter, 2, d, d) stack of
    post-row / post-column stage probabilities; storing probabilities (the
    exp values already produced by each logsumexp) leaves the backward pass
    free of transcendental calls.
    """
    z = logits.astype(np.float64, copy=True)
    d = z.shape[0]
    stages = np.empty((n_iter, 2, d, d), dtype=np.float64)
    for l in range(n_iter):
        row_max = z.max(axis=1, keepdims=True)
        vals = np.exp(z - row_max)
        sums = vals.sum(axis=1, keepdims=True)
        z = z - (np.log(sums) + row_max)
        stages[l, 0] = vals / sums
        col_max = z.max(axis=0, keepdims=True)
        vals = np.exp(z - col_max)
        sums = vals.sum(axis=0, keepdims=True)
        z = z - (np.log(sums) + col_max)
        stages[l, 1] = vals / sums
    return stages[n_iter - 1, 1].copy(), stages


def sinkhorn_log_backward(stages: np.ndarray, grad_p: np.ndarray) -> np.ndarray:
    """Reverse-mode gradient through the unrolled Sinkhorn iterations."""
    n_iter = stages.shape[0]
    u = grad_p * stages[n_iter - 1, 1]
    for l in range(n_iter - 1, -1, -1):
        u = u - stages[l, 1] * u.sum(axis=0, keepdims=True)
        u = u - stages[l, 0] * u.sum(axis=1, keepdims=True)
    return u


def solve_assignment_min(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect assignment via shortest augmenting paths with potentials.

    Returns row-to-column indices (0-based).  On ties the smallest column
    index wins because minima are updated with strict comparison.
    """
    n = cost.shape[0]
    u = np.zeros(n + 1, dtype=np.float64)
    v = np.zeros(n + 1, dtype=np.float64)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            improve = ~used[1:] & (cur < minv[1:])
            minv[1:][improve] = cur[improve]
            way[1:][improve] = j0
            candidates = np.where(used[1:], np.inf, minv[1:])
            j1 = int(np.argmin(candidates)) + 1
            delta = candidates[j1 - 1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
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
