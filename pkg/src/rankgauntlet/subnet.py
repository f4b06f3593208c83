"""Supernetwork with fixed random weights and trainable edge scores.

Clients never touch the weights: local training runs minibatch SGD on the
per-edge scores through a straight-through estimator (the binary top-k mask
is treated as identity on the backward pass), and the deliverable of a
training run is the argsort of the scores, one ranking per layer.

Edge IDs are 1-based and enumerate each layer's weight matrix in C order:
edge e of a (fan_in, fan_out) layer sits at row (e-1) // fan_out and column
(e-1) % fan_out.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    DimensionMismatch,
    EmptyDataset,
    InvalidArchitecture,
    InvalidSparsity,
)
from .ranking import Ranking, selection_boundary, sort_get_index


@dataclass(frozen=True)
class Dataset:
    """Feature matrix plus integer class labels in [0, n_classes)."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if feats.ndim != 2 or feats.shape[0] == 0:
            raise EmptyDataset("features must be a non-empty (samples, dims) matrix")
        if labels.shape != (feats.shape[0],):
            raise DimensionMismatch("one label per sample required")
        if labels.min() < 0 or labels.max() >= self.n_classes:
            raise DimensionMismatch(f"labels must lie in [0, {self.n_classes})")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass(frozen=True)
class TrainConfig:
    local_epochs: int = 2
    batch_size: int = 32
    learning_rate: float = 0.4
    momentum: float = 0.9
    weight_decay: float = 1e-4

    def __post_init__(self):
        if self.local_epochs < 1:
            raise DimensionMismatch("local_epochs must be >= 1")
        if self.learning_rate <= 0:
            raise DimensionMismatch("learning_rate must be positive")


@dataclass(frozen=True)
class Supernetwork:
    """Fixed random weights plus trainable scores, regenerable from the seed."""

    seed: int
    layer_sizes: tuple[int, ...]
    k_percent: float
    weights: tuple[np.ndarray, ...]
    scores: tuple[np.ndarray, ...]

    @property
    def n_layers(self) -> int:
        return len(self.layer_sizes) - 1

    @property
    def edge_counts(self) -> tuple[int, ...]:
        return tuple(
            self.layer_sizes[l] * self.layer_sizes[l + 1] for l in range(self.n_layers)
        )

    def with_scores(self, scores: list[np.ndarray]) -> "Supernetwork":
        return Supernetwork(
            seed=self.seed,
            layer_sizes=self.layer_sizes,
            k_percent=self.k_percent,
            weights=self.weights,
            scores=tuple(np.asarray(s, dtype=np.float64) for s in scores),
        )

    def rankings(self) -> list[Ranking]:
        """Argsort of the current scores, one ranking per layer."""
        return [
            sort_get_index(self.scores[l], layer_id=l) for l in range(self.n_layers)
        ]


def init_supernetwork(seed: int, architecture, k_percent: float) -> Supernetwork:
    """Generate weights and initial scores deterministically from the seed.

    Weights are fan-in-scaled uniform, scores uniform in (0, 1); per layer the
    weights are drawn before the scores so the stream layout is fixed.
    """
    sizes = tuple(int(s) for s in architecture)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise InvalidArchitecture(f"bad layer sizes: {sizes}")
    if not 0 < k_percent <= 100:
        raise InvalidSparsity(f"k_percent must be in (0, 100], got {k_percent}")
    rng = np.random.default_rng(seed)
    weights = []
    scores = []
    for l in range(len(sizes) - 1):
        fan_in, fan_out = sizes[l], sizes[l + 1]
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        scores.append(rng.random(fan_in * fan_out))
    return Supernetwork(
        seed=seed,
        layer_sizes=sizes,
        k_percent=k_percent,
        weights=tuple(weights),
        scores=tuple(scores),
    )


def apply_global_ranking(net: Supernetwork, rankings: list[Ranking]) -> Supernetwork:
    """Reassign the sorted score multiset so argsort(scores) equals each ranking."""
    if len(rankings) != net.n_layers:
        raise DimensionMismatch("one ranking per layer required")
    new_scores = []
    for l, r in enumerate(rankings):
        n = net.edge_counts[l]
        if r.n != n:
            raise DimensionMismatch(f"layer {l}: ranking has {r.n} edges, expected {n}")
        reassigned = np.empty(n, dtype=np.float64)
        reassigned[r.order - 1] = np.sort(net.scores[l])
        new_scores.append(reassigned)
    return net.with_scores(new_scores)


def _padded(net: Supernetwork):
    """Stack layers into the padded (L, D, D) form the kernels consume."""
    sizes = net.layer_sizes
    pad = max(sizes)
    n_layers = net.n_layers
    W = np.zeros((n_layers, pad, pad), dtype=np.float64)
    S = np.zeros((n_layers, pad, pad), dtype=np.float64)
    for l in range(n_layers):
        fan_in, fan_out = sizes[l], sizes[l + 1]
        W[l, :fan_in, :fan_out] = net.weights[l]
        S[l, :fan_in, :fan_out] = net.scores[l].reshape(fan_in, fan_out)
    dims = np.asarray(sizes, dtype=np.int64)
    t_arr = np.asarray(
        [selection_boundary(net.edge_counts[l], net.k_percent) for l in range(n_layers)],
        dtype=np.int64,
    )
    return W, S, dims, t_arr


def ep_forward(net: Supernetwork, batch: np.ndarray) -> np.ndarray:
    """Logits of the masked network (per-layer top-k% scored edges active)."""
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 2 or batch.shape[1] != net.layer_sizes[0]:
        raise DimensionMismatch(
            f"batch must be (samples, {net.layer_sizes[0]}), got {batch.shape}"
        )
    W, S, dims, t_arr = _padded(net)
    return kernels.masked_forward(W, S, dims, t_arr, batch)


def derive_shuffle_seed(global_seed: int, client_id: int, round_t: int) -> int:
    """Per-client, per-round shuffle seed, stable across execution order."""
    ss = np.random.SeedSequence([int(global_seed), int(client_id), int(round_t)])
    return int(ss.generate_state(1)[0])


def _batch_schedule(n_samples: int, cfg: TrainConfig, shuffle_seed: int):
    rng = np.random.default_rng(shuffle_seed)
    idx_chunks = []
    bounds = [0]
    for _ in range(cfg.local_epochs):
        perm = rng.permutation(n_samples)
        for start in range(0, n_samples, cfg.batch_size):
            chunk = perm[start : start + cfg.batch_size]
            idx_chunks.append(chunk)
            bounds.append(bounds[-1] + chunk.size)
    return (
        np.concatenate(idx_chunks).astype(np.int64),
        np.asarray(bounds, dtype=np.int64),
    )


def ep_train_scores(
    net: Supernetwork,
    data: Dataset,
    cfg: TrainConfig,
    shuffle_seed: int = 0,
    grad_scale: float = 1.0,
) -> list[np.ndarray]:
    """Run edge-popup locally and return the trained flat score vectors.

    The weights are untouched; ``grad_scale=-1`` negates the loss gradient
    (used by the gradient-ascent attack) while weight decay keeps its sign.
    """
    if len(data) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    if data.features.shape[1] != net.layer_sizes[0]:
        raise DimensionMismatch("dataset feature width does not match input layer")
    W, S, dims, t_arr = _padded(net)
    V = np.zeros_like(S)
    batch_idx, batch_bounds = _batch_schedule(len(data), cfg, shuffle_seed)
    kernels.ep_sgd(
        W,
        S,
        V,
        dims,
        t_arr,
        data.features,
        data.labels,
        batch_idx,
        batch_bounds,
        float(cfg.learning_rate),
        float(cfg.momentum),
        float(cfg.weight_decay),
        float(grad_scale),
    )
    sizes = net.layer_sizes
    return [
        S[l, : sizes[l], : sizes[l + 1]].ravel().copy() for l in range(net.n_layers)
    ]


def ep_train(
    net: Supernetwork, data: Dataset, cfg: TrainConfig, shuffle_seed: int = 0
) -> list[Ranking]:
    """Edge-popup local training; returns argsort(scores) per layer."""
    trained = ep_train_scores(net, data, cfg, shuffle_seed=shuffle_seed)
    return [sort_get_index(s, layer_id=l) for l, s in enumerate(trained)]


def evaluate(net: Supernetwork, r_g: list[Ranking], test: Dataset) -> float:
    """Fraction of correct argmax predictions under the global ranking's mask."""
    if len(test) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    logits = ep_forward(apply_global_ranking(net, r_g), test.features)
    return float((logits.argmax(axis=1) == test.labels).mean())


def evaluate_loss_error(
    net: Supernetwork, r_g: list[Ranking], data: Dataset
) -> tuple[float, float]:
    """Mean cross-entropy loss and error rate under the global ranking's mask."""
    if len(data) == 0:
        raise EmptyDataset("cannot evaluate on an empty dataset")
    logits = ep_forward(apply_global_ranking(net, r_g), data.features)
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = -float(log_probs[np.arange(len(data)), data.labels].mean())
    error = 1.0 - float((logits.argmax(axis=1) == data.labels).mean())
    return loss, error


def save_dataset(data: Dataset, path) -> None:
    """Text format: header ``n_samples n_features n_classes``, then one sample per line."""
    with open(path, "w", encoding="ascii") as fh:
        n, d = data.features.shape
        fh.write(f"{n} {d} {data.n_classes}\n")
        for row, label in zip(data.features, data.labels):
            fh.write(" ".join(repr(float(v)) for v in row) + f" {int(label)}\n")


def load_dataset(path) -> Dataset:
    """Inverse of :func:`save_dataset`."""
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().split()
        if len(header) != 3:
            raise EmptyDataset(f"bad dataset header in {path}")
        n, d, n_classes = (int(v) for v in header)
        feats = np.empty((n, d), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            parts = fh.readline().split()
            if len(parts) != d + 1:
                raise EmptyDataset(f"bad sample line {i + 2} in {path}")
            feats[i] = [float(v) for v in parts[:d]]
            labels[i] = int(parts[d])
    return Dataset(features=feats, labels=labels, n_classes=n_classes)
