"""Vulnerable-edge identification: bounds, stealth shrinking, and estimation.

An edge is attackable only when its benign aggregated reputation lies
strictly inside a band of half-width m*(a_n - a_1) around the selection
boundary; the band is computed from an estimate of the benign aggregate,
which the adversary builds either from its own clients' rankings (scaled up)
or from the previous round's global ranking minus its own prior submissions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyRange,
    EmptyTrueSet,
    InvalidZeta,
    NoHistory,
    NoMaliciousClients,
)
from .ranking import Ranking, default_scale, selection_boundary


@dataclass(frozen=True)
class BenignEstimate:
    """Estimated aggregated reputation of the benign clients, one layer."""

    values: np.ndarray
    method: str  # "alternative" | "historical"
    round_t: int
    layer_id: int = 0

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=np.float64)
        )


@dataclass(frozen=True)
class VulnerableRange:
    """Reputation band (lower, upper) and the edges strictly inside it."""

    layer_id: int
    lower: float
    upper: float
    edge_ids: np.ndarray  # sorted, 1-based
    zeta: float
    reputations: np.ndarray  # estimate the band was computed from

    def __post_init__(self):
        object.__setattr__(
            self, "edge_ids", np.asarray(self.edge_ids, dtype=np.int64)
        )
        object.__setattr__(
            self, "reputations", np.asarray(self.reputations, dtype=np.float64)
        )

    @property
    def is_empty(self) -> bool:
        return self.edge_ids.size == 0

    @property
    def fraction(self) -> float:
        return self.edge_ids.size / self.reputations.size


def _edges_inside(values: np.ndarray, lower: float, upper: float) -> np.ndarray:
    inside = np.flatnonzero((values > lower) & (values < upper)) + 1
    return inside.astype(np.int64)


def vulnerable_bounds(
    w_bar: BenignEstimate, m: float, a=None, k_percent: float = 50.0
) -> VulnerableRange:
    """Band of attackable reputations given m adversaries and weights a.

    The top-k partition is taken from the estimate itself (the adversary has
    no better view of the true benign split); bounds are strict.
    """
    values = w_bar.values
    n = values.size
    a = default_scale(n) if a is None else np.asarray(a)
    if a.shape != (n,):
        raise DimensionMismatch(f"weight vector has length {a.size}, expected {n}")
    t = selection_boundary(n, k_percent)
    if m < 0:
        raise DimensionMismatch("m must be non-negative")
    if t < 1 or t >= n:
        # Everything (or nothing) is selected: there is no crossable boundary.
        return VulnerableRange(
            layer_id=w_bar.layer_id,
            lower=np.inf,
            upper=-np.inf,
            edge_ids=np.empty(0, dtype=np.int64),
            zeta=1.0,
            reputations=values,
        )
    budget = float(m) * float(a[-1] - a[0])
    by_rep = np.argsort(values, kind="stable")
    w_max_out = float(values[by_rep[t - 1]])
    w_min_in = float(values[by_rep[t]])
    lower = w_max_out - budget
    upper = w_min_in + budget
    return VulnerableRange(
        layer_id=w_bar.layer_id,
        lower=lower,
        upper=upper,
        edge_ids=_edges_inside(values, lower, upper),
        zeta=1.0,
        reputations=values,
    )


def apply_zeta(vrange: VulnerableRange, zeta: float) -> VulnerableRange:
    """Shrink the band symmetrically; zeta=1 is the identity."""
    if not 0 < zeta <= 1:
        raise InvalidZeta(f"zeta must lie in (0, 1], got {zeta}")
    if zeta == 1.0 or not np.isfinite(vrange.upper - vrange.lower):
        return replace(vrange, zeta=zeta)
    shift = (1.0 - zeta) * (vrange.upper - vrange.lower) / 2.0
    lower = vrange.lower + shift
    upper = vrange.upper - shift
    return replace(
        vrange,
        lower=lower,
        upper=upper,
        edge_ids=_edges_inside(vrange.reputations, lower, upper),
        zeta=zeta,
    )


def _reputation_values(r: Ranking, a: np.ndarray) -> np.ndarray:
    positions = np.argsort(r.order, kind="stable")
    return a[positions].astype(np.float64)


def estimate_alternative(
    malicious_rankings: list[Ranking], U: int, a=None
) -> BenignEstimate:
    """Scale the adversary's own aggregate by (U/m - 1) to stand in for the benign one."""
    m = len(malicious_rankings)
    if m < 1:
        raise NoMaliciousClients("alternative estimation needs at least one ranking")
    if U <= m:
        raise DimensionMismatch(f"U={U} must exceed m={m}")
    n = malicious_rankings[0].n
    a = default_scale(n) if a is None else np.asarray(a)
    total = np.zeros(n, dtype=np.float64)
    for r in malicious_rankings:
        total += _reputation_values(r, a)
    return BenignEstimate(
        values=(U / m - 1.0) * total,
        method="alternative",
        round_t=0,
        layer_id=malicious_rankings[0].layer_id,
    )


def estimate_historical(
    r_g_prev: Ranking,
    malicious_prev: list[Ranking],
    U: int,
    a=None,
    round_t: int = 2,
) -> BenignEstimate:
    """Previous global ranking times U, minus the adversary's own prior submissions."""
    if round_t < 2 or r_g_prev is None:
        raise NoHistory("historical estimation needs a completed previous round")
    n = r_g_prev.n
    a = default_scale(n) if a is None else np.asarray(a)
    values = U * _reputation_values(r_g_prev, a)
    for r in malicious_prev:
        values -= _reputation_values(r, a)
    return BenignEstimate(
        values=values,
        method="historical",
        round_t=round_t,
        layer_id=r_g_prev.layer_id,
    )


@dataclass(frozen=True)
class VulnerableMatrix:
    """One client's ranking restricted to the vulnerable edges.

    ``rows`` are the client's original reputation indices (sorted, 1-based)
    occupied by vulnerable edges, ``cols`` the vulnerable edge IDs (sorted,
    shared across clients); ``matrix[i, j] = 1`` iff edge cols[j] sits at
    reputation index rows[i].
    """

    rows: np.ndarray
    cols: np.ndarray
    matrix: np.ndarray

    @property
    def d(self) -> int:
        return self.cols.size

    def row_weights(self, a=None) -> np.ndarray:
        """b[j] = reputation weight this client currently grants to edge cols[j].

        With the default scale a_i = i the weight of a row is its index.
        """
        if a is None:
            vals = self.rows.astype(np.float64)
        else:
            vals = np.asarray(a)[self.rows - 1].astype(np.float64)
        return vals @ self.matrix


def extract_vulnerable(
    rankings: list[Ranking], vrange: VulnerableRange
) -> list[VulnerableMatrix]:
    """Per-client d x d one-hot submatrices over the vulnerable edges."""
    if vrange.is_empty:
        raise EmptyRange("no vulnerable edges in range")
    cols = np.sort(vrange.edge_ids)
    out = []
    for r in rankings:
        positions = np.argsort(r.order, kind="stable")  # 0-based position per edge
        sel_pos = positions[cols - 1]
        order_by_pos = np.argsort(sel_pos, kind="stable")
        rows = sel_pos[order_by_pos] + 1
        d = cols.size
        matrix = np.zeros((d, d), dtype=np.float64)
        row_rank = np.empty(d, dtype=np.int64)
        row_rank[order_by_pos] = np.arange(d)
        matrix[row_rank, np.arange(d)] = 1.0
        out.append(VulnerableMatrix(rows=rows, cols=cols, matrix=matrix))
    return out


def estimation_accuracy(estimated_set, true_set) -> float:
    """|estimated ∩ true| / |true|."""
    true = set(int(e) for e in true_set)
    if not true:
        raise EmptyTrueSet("true vulnerable set is empty")
    est = set(int(e) for e in estimated_set)
    return len(est & true) / len(true)
