"""Permutation algebra and majority-vote aggregation of edge rankings.

A ranking lists edge IDs in ascending order of importance: position ``i``
(1-based) carries reputation weight ``a_i``.  Aggregation sums per-edge
reputations across clients and re-sorts; ties always break toward the
smaller edge ID (stable sort), which keeps every operation deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AllZeroTrust, DimensionMismatch, InvalidSparsity, MalformedMatrix


def _as_order(order) -> np.ndarray:
    arr = np.asarray(order, dtype=np.int64)
    if arr.ndim != 1 or arr.size < 1:
        raise MalformedMatrix("ranking must be a non-empty 1-D sequence")
    return arr


@dataclass(frozen=True)
class Ranking:
    """A layer's edge permutation, least important edge first.

    ``order[i]`` (0-based i) is the edge ID holding reputation index i+1.
    Edge IDs are 1-based and must form a permutation of 1..n.
    """

    layer_id: int
    order: np.ndarray

    def __post_init__(self):
        arr = _as_order(self.order)
        object.__setattr__(self, "order", arr)
        n = arr.size
        seen = np.zeros(n, dtype=bool)
        if arr.min() < 1 or arr.max() > n:
            raise MalformedMatrix(f"edge IDs must lie in [1, {n}]")
        seen[arr - 1] = True
        if not seen.all():
            raise MalformedMatrix("order is not a permutation: duplicate edge IDs")

    @property
    def n(self) -> int:
        return self.order.size

    def reversed(self) -> "Ranking":
        return Ranking(self.layer_id, self.order[::-1].copy())

    def __eq__(self, other):
        return (
            isinstance(other, Ranking)
            and self.layer_id == other.layer_id
            and np.array_equal(self.order, other.order)
        )


@dataclass(frozen=True)
class PermutationMatrix:
    """Sparse one-hot matrix: row i (reputation index) maps to column cols[i] (edge ID).

    Construction does not validate; ``from_matrix`` / ``from_dense`` do.
    """

    n: int
    cols: np.ndarray

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n, self.n), dtype=np.int64)
        dense[np.arange(self.n), self.cols - 1] = 1
        return dense


@dataclass(frozen=True)
class ReputationVector:
    """Per-edge importance totals; values[j] is the reputation of edge j+1."""

    values: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))
        object.__setattr__(self, "scale", np.asarray(self.scale))


@dataclass(frozen=True)
class AggregateMatrix:
    """Dense vote-count matrix; counts[i, j] = clients placing edge j+1 at index i+1."""

    counts: np.ndarray
    layer_id: int = 0

    @property
    def n(self) -> int:
        return self.counts.shape[0]

    @property
    def n_clients(self) -> int:
        return int(self.counts[0].sum())


@dataclass(frozen=True)
class Supermask:
    """Binary edge-selection mask for one layer: bits[j] = 1 keeps edge j+1."""

    layer_id: int
    bits: np.ndarray
    k_percent: float


def selection_boundary(n: int, k_percent: float) -> int:
    """Index t separating excluded edges (reputation index <= t) from selected ones."""
    if not 0 < k_percent <= 100:
        raise InvalidSparsity(f"k_percent must be in (0, 100], got {k_percent}")
    return int(np.floor(n * (1.0 - k_percent / 100.0)))


def default_scale(n: int) -> np.ndarray:
    """The standard reputation weights a_i = i."""
    return np.arange(1, n + 1, dtype=np.int64)


def reputation_of(r: Ranking) -> ReputationVector:
    """Invert a ranking into its per-edge reputation indices (scale a_i = i)."""
    values = np.argsort(r.order, kind="stable") + 1
    return ReputationVector(values=values, scale=default_scale(r.n))


def to_matrix(r: Ranking) -> PermutationMatrix:
    """Expand a 1-D ranking into its one-hot row-to-edge matrix."""
    return PermutationMatrix(n=r.n, cols=r.order.copy())


def from_matrix(p: PermutationMatrix, layer_id: int = 0) -> Ranking:
    """Collapse a permutation matrix back into a 1-D ranking.

    Raises MalformedMatrix when any row or column is not exactly one-hot.
    """
    cols = np.asarray(p.cols, dtype=np.int64)
    if cols.ndim != 1 or cols.size != p.n:
        raise MalformedMatrix("row map has wrong shape")
    if cols.min(initial=0) < 1 or cols.max(initial=0) > p.n:
        raise MalformedMatrix("column index out of range")
    if np.unique(cols).size != p.n:
        raise MalformedMatrix("a column holds more than one entry")
    return Ranking(layer_id=layer_id, order=cols.copy())


def matrix_from_dense(dense) -> PermutationMatrix:
    """Build a PermutationMatrix from a dense 0/1 array, validating one-hot rows."""
    arr = np.asarray(dense)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise MalformedMatrix("dense permutation matrix must be square")
    if not np.isin(arr, (0, 1)).all():
        raise MalformedMatrix("entries must be 0 or 1")
    if not (arr.sum(axis=1) == 1).all():
        raise MalformedMatrix("a row is not one-hot")
    cols = arr.argmax(axis=1) + 1
    return PermutationMatrix(n=arr.shape[0], cols=cols.astype(np.int64))


def _check_same_shape(rankings: list[Ranking]) -> tuple[int, int]:
    if not rankings:
        raise DimensionMismatch("need at least one ranking")
    n = rankings[0].n
    layer = rankings[0].layer_id
    for r in rankings[1:]:
        if r.n != n or r.layer_id != layer:
            raise DimensionMismatch(
                f"rankings disagree: ({r.layer_id}, n={r.n}) vs ({layer}, n={n})"
            )
    return n, layer


def aggregate(rankings: list[Ranking]) -> AggregateMatrix:
    """Dimension-wise sum of the one-hot expansions of all client rankings."""
    n, layer = _check_same_shape(rankings)
    counts = np.zeros((n, n), dtype=np.int64)
    rows = np.arange(n)
    for r in rankings:
        counts[rows, r.order - 1] += 1
    return AggregateMatrix(counts=counts, layer_id=layer)


def aggregated_reputation(s: AggregateMatrix, a=None) -> ReputationVector:
    """Per-edge vote tally: values[j] = sum_i a_i * counts[i, j]."""
    n = s.n
    a = default_scale(n) if a is None else np.asarray(a)
    if a.shape != (n,):
        raise DimensionMismatch(f"weight vector has length {a.size}, expected {n}")
    if not (np.diff(a) > 0).all():
        raise DimensionMismatch("weight vector must be strictly ascending")
    return ReputationVector(values=a @ s.counts, scale=a)


def sort_get_index(values, layer_id: int = 0) -> Ranking:
    """Ascending argsort of reputations into a ranking; ties go to the smaller edge ID."""
    order = np.argsort(np.asarray(values), kind="stable") + 1
    return Ranking(layer_id=layer_id, order=order.astype(np.int64))


def majority_vote(rankings: list[Ranking], a=None) -> Ranking:
    """Aggregate client rankings into the global ranking by reputation-weighted voting."""
    s = aggregate(rankings)
    rep = aggregated_reputation(s, a)
    return sort_get_index(rep.values, layer_id=s.layer_id)


def weighted_majority_vote(rankings: list[Ranking], trust_scores, a=None) -> Ranking:
    """Majority vote with per-client trust weights s_u applied to each one-hot matrix."""
    n, layer = _check_same_shape(rankings)
    trust = np.asarray(trust_scores, dtype=np.float64)
    if trust.shape != (len(rankings),):
        raise DimensionMismatch("one trust score per ranking required")
    if (trust < 0).any():
        raise AllZeroTrust("trust scores must be non-negative")
    if not trust.any():
        raise AllZeroTrust("all trust scores are zero")
    a = default_scale(n) if a is None else np.asarray(a)
    if a.shape != (n,):
        raise DimensionMismatch(f"weight vector has length {a.size}, expected {n}")
    values = np.zeros(n, dtype=np.float64)
    for r, s_u in zip(rankings, trust):
        # a @ (s_u * R2d) contributes s_u * a_position(edge) per edge
        positions = np.argsort(r.order, kind="stable")
        values += s_u * a[positions]
    return sort_get_index(values, layer_id=layer)


def supermask_of(r: Ranking, k_percent: float) -> Supermask:
    """Mask keeping the top-k% edges of a ranking (reputation index > t)."""
    t = selection_boundary(r.n, k_percent)
    bits = np.zeros(r.n, dtype=np.int8)
    bits[r.order[t:] - 1] = 1
    return Supermask(layer_id=r.layer_id, bits=bits, k_percent=k_percent)


def top_k_edges(r: Ranking, k_percent: float) -> frozenset[int]:
    """The set of edge IDs selected by the supermask."""
    t = selection_boundary(r.n, k_percent)
    return frozenset(int(e) for e in r.order[t:])


def format_rankings(rankings: list[Ranking]) -> str:
    """Serialize rankings one line per layer: ``layer_id: e1,e2,...,en``."""
    lines = []
    for r in rankings:
        lines.append(f"{r.layer_id}: " + ",".join(str(int(e)) for e in r.order))
    return "\n".join(lines) + "\n"


def parse_rankings(text: str) -> list[Ranking]:
    """Inverse of :func:`format_rankings`."""
    rankings = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        head, _, body = line.partition(":")
        order = [int(tok) for tok in body.split(",")]
        rankings.append(Ranking(layer_id=int(head), order=np.array(order)))
    return rankings
