"""Server-side robust aggregation applied to client rankings before voting.

Distance- and similarity-based rules operate on reputation embeddings (the
per-layer reputation vectors concatenated into one real vector per client,
which is exactly what the vote sums).  Every defense returns a verdict:
which positional clients to keep, optionally a trust weight per client, and
diagnostics.  Aggregation after filtering is always (weighted) majority
voting, never a different rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingRootData, TooFewClients
from .ranking import Ranking, majority_vote, reputation_of, top_k_edges
from .subnet import Dataset, Supernetwork, evaluate_loss_error


@dataclass
class DefenseVerdict:
    kept: list[int]  # positional indices into the round's client list
    trust: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


def reputation_embedding(rankings_per_client: list[list[Ranking]]) -> np.ndarray:
    """Concatenate each client's per-layer reputation vectors into one row."""
    rows = []
    for layers in rankings_per_client:
        rows.append(
            np.concatenate([reputation_of(r).values.astype(np.float64) for r in layers])
        )
    return np.stack(rows)


def _pairwise_sq_dists(embeddings: np.ndarray) -> np.ndarray:
    diff = embeddings[:, None, :] - embeddings[None, :, :]
    return (diff**2).sum(axis=2)


def _cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(u @ v / (nu * nv))


def krum(embeddings: np.ndarray, m: int) -> DefenseVerdict:
    """Keep the single client closest to its U - m - 2 nearest neighbours.

    Present for completeness; the default suites exclude it because a
    single-vote global ranking converges poorly even without an attack.
    """
    n = embeddings.shape[0]
    if n <= 2 * m + 2:
        raise TooFewClients(f"krum needs U > 2m + 2, got U={n}, m={m}")
    sq = _pairwise_sq_dists(embeddings)
    n_neighbors = n - m - 2
    scores = np.array(
        [np.sort(sq[i])[1 : n_neighbors + 1].sum() for i in range(n)]
    )
    return DefenseVerdict(kept=[int(np.argmin(scores))], diagnostics={"scores": scores})


def multi_krum(embeddings: np.ndarray, m: int) -> DefenseVerdict:
    """Iteratively keep the c clients closest to their nearest neighbours.

    c is the largest value with U - c > 2m + 2; requires U > 2m + 3.
    """
    n = embeddings.shape[0]
    if n <= 2 * m + 3:
        raise TooFewClients(f"multi-krum needs U > 2m + 3, got U={n}, m={m}")
    c = n - 2 * m - 3
    sq = _pairwise_sq_dists(embeddings)
    remaining = list(range(n))
    kept: list[int] = []
    scores_by_client: dict[int, float] = {}
    while len(kept) < c:
        n_neighbors = max(1, min(n - m - 2, len(remaining) - 1))
        best_idx, best_score = None, np.inf
        for i in remaining:
            dists = np.sort(sq[i, remaining])[1 : n_neighbors + 1]
            score = float(dists.sum())
            if score < best_score:
                best_idx, best_score = i, score
        kept.append(best_idx)
        scores_by_client[best_idx] = best_score
        remaining.remove(best_idx)
    kept.sort()
    return DefenseVerdict(kept=kept, diagnostics={"scores": scores_by_client, "c": c})


def afa(embeddings: np.ndarray, xi: float = 2.0, xi_step: float = 0.5) -> DefenseVerdict:
    """Filter clients whose cosine similarity to the running mean is an outlier.

    Repeats with a widening band until a fixpoint, per the original scheme.
    """
    n = embeddings.shape[0]
    good = list(range(n))
    sims_record = np.zeros(n)
    while len(good) > 1:
        center = embeddings[good].mean(axis=0)
        sims = np.array([_cosine(embeddings[i], center) for i in good])
        for i, s in zip(good, sims):
            sims_record[i] = s
        mean_s, med_s, std_s = sims.mean(), float(np.median(sims)), sims.std()
        if std_s == 0:
            break
        if mean_s < med_s:
            bad = [i for i, s in zip(good, sims) if s < med_s - xi * std_s]
        else:
            bad = [i for i, s in zip(good, sims) if s > med_s + xi * std_s]
        if not bad or len(bad) >= len(good):
            break
        good = [i for i in good if i not in bad]
        xi += xi_step
    return DefenseVerdict(kept=sorted(good), diagnostics={"similarities": sims_record})


def faba(embeddings: np.ndarray, m: int) -> DefenseVerdict:
    """Remove the client farthest from the mean, m times."""
    n = embeddings.shape[0]
    if n <= m:
        raise TooFewClients(f"faba needs U > m, got U={n}, m={m}")
    good = list(range(n))
    removed = []
    for _ in range(m):
        center = embeddings[good].mean(axis=0)
        dists = [float(np.linalg.norm(embeddings[i] - center)) for i in good]
        worst = good[int(np.argmax(dists))]
        good.remove(worst)
        removed.append(worst)
    return DefenseVerdict(kept=sorted(good), diagnostics={"removed": removed})


def dnc(
    embeddings: np.ndarray,
    m: int,
    subsample_dims: int | None = None,
    filter_frac: float = 1.0,
    seed: int = 0,
) -> DefenseVerdict:
    """Project centered (subsampled) updates on the top singular direction and drop outliers."""
    n, dim = embeddings.shape
    rng = np.random.default_rng(seed)
    if subsample_dims is None or subsample_dims >= dim:
        cols = np.arange(dim)
    else:
        cols = np.sort(rng.choice(dim, size=max(1, subsample_dims), replace=False))
    sub = embeddings[:, cols]
    centered = sub - sub.mean(axis=0)
    if not centered.any():
        scores = np.zeros(n)
    else:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        scores = (centered @ vt[0]) ** 2
    n_drop = min(n - 1, int(round(filter_frac * m)))
    if n_drop <= 0:
        kept = list(range(n))
    else:
        # stable argsort: on ties the earliest client is dropped last
        order = np.argsort(scores, kind="stable")
        kept = sorted(int(i) for i in order[: n - n_drop])
    return DefenseVerdict(kept=kept, diagnostics={"scores": scores})


def fltrust(embeddings: np.ndarray, server_embedding: np.ndarray | None) -> DefenseVerdict:
    """Clipped cosine similarity to the server's own update as a trust weight."""
    if server_embedding is None:
        raise MissingRootData("fltrust needs the server's root-data embedding")
    trust = np.array(
        [max(0.0, _cosine(e, server_embedding)) for e in embeddings], dtype=np.float64
    )
    return DefenseVerdict(
        kept=list(range(embeddings.shape[0])),
        trust=trust,
        diagnostics={"trust": trust.copy()},
    )


def foolsgold(
    embeddings: np.ndarray, history: np.ndarray | None = None, eps: float = 1e-6
) -> DefenseVerdict:
    """Down-weight clients whose accumulated updates look like each other's.

    ``history`` is the per-client running sum of embeddings (defaults to the
    current round); weights follow the pardoning + logit rescale of the
    original scheme.
    """
    base = embeddings if history is None else history
    n = base.shape[0]
    norms = np.linalg.norm(base, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    unit = base / safe[:, None]
    cs = unit @ unit.T - np.eye(n)
    max_cs = cs.max(axis=1) + eps
    for i in range(n):
        for j in range(n):
            if i != j and max_cs[i] < max_cs[j]:
                cs[i, j] *= max_cs[i] / max_cs[j]
    wv = 1.0 - cs.max(axis=1)
    wv = np.clip(wv, 0.0, 1.0)
    wv /= wv.max() + eps
    wv[wv == 1.0] = 0.99
    with np.errstate(divide="ignore"):
        wv = np.log(wv / (1.0 - wv) + eps) + 0.5
    wv[np.isinf(wv) | (wv > 1.0)] = 1.0
    wv[wv < 0.0] = 0.0
    return DefenseVerdict(
        kept=list(range(n)), trust=wv, diagnostics={"trust": wv.copy()}
    )


def fang_validate(
    rankings_per_client: list[list[Ranking]],
    net: Supernetwork,
    server_data: Dataset | None,
    k_percent: float,
) -> DefenseVerdict:
    """Leave-one-out validation: drop clients whose inclusion worsens loss and error.

    Re-votes rather than retraining, and never drops below half the clients.
    """
    if server_data is None:
        raise MissingRootData("fang needs a server validation dataset")
    n = len(rankings_per_client)
    n_layers = len(rankings_per_client[0])

    def vote_of(indices) -> list[Ranking]:
        return [
            majority_vote([rankings_per_client[i][l] for i in indices])
            for l in range(n_layers)
        ]

    loss_all, err_all = evaluate_loss_error(net, vote_of(range(n)), server_data)
    harm = np.zeros(n)
    excluded = []
    if n > 1:
        for u in range(n):
            others = [i for i in range(n) if i != u]
            loss_wo, err_wo = evaluate_loss_error(net, vote_of(others), server_data)
            harm[u] = (loss_all - loss_wo) + (err_all - err_wo)
            if loss_all > loss_wo and err_all > err_wo:
                excluded.append(u)
    max_excluded = n - (n + 1) // 2
    if len(excluded) > max_excluded:
        # re-admit the least harmful excluded clients until half remain
        excluded.sort(key=lambda u: (harm[u], u))
        excluded = excluded[len(excluded) - max_excluded :] if max_excluded > 0 else []
    kept = [i for i in range(n) if i not in set(excluded)]
    return DefenseVerdict(
        kept=kept, diagnostics={"harm": harm, "loss_all": loss_all, "err_all": err_all}
    )


def _two_means_1d(values: np.ndarray, iters: int = 100) -> np.ndarray:
    """1-D 2-means with farthest-pair initialization; returns cluster labels {0,1}.

    Cluster 1 is the higher-mean cluster.  A constant input collapses to a
    single cluster (all labeled 1).
    """
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return np.ones(values.size, dtype=np.int64)
    c0, c1 = lo, hi
    labels = np.zeros(values.size, dtype=np.int64)
    for it in range(iters):
        new_labels = (np.abs(values - c1) < np.abs(values - c0)).astype(np.int64)
        if it > 0 and (new_labels == labels).all():
            break
        labels = new_labels
        if labels.any():
            c1 = float(values[labels == 1].mean())
        if (labels == 0).any():
            c0 = float(values[labels == 0].mean())
    if c0 > c1:
        labels = 1 - labels
    return labels


def ibd(
    rankings_per_client: list[list[Ranking]],
    k_percent: float,
    malicious_truth: set[int] | None = None,
) -> DefenseVerdict:
    """Intersection-based defense: cluster clients by mean pairwise top-k overlap.

    Clients in the lower-overlap cluster are dropped.  FPR/TPR diagnostics
    are filled in when the caller supplies the ground-truth malicious set.
    """
    n = len(rankings_per_client)
    if n < 3:
        raise TooFewClients(f"ibd needs at least 3 clients, got {n}")
    n_layers = len(rankings_per_client[0])
    top_sets = [
        [top_k_edges(rankings_per_client[u][l], k_percent) for l in range(n_layers)]
        for u in range(n)
    ]
    mu = np.zeros(n)
    for u in range(n):
        total = 0
        for v in range(n):
            if v == u:
                continue
            total += sum(
                len(top_sets[u][l] & top_sets[v][l]) for l in range(n_layers)
            )
        mu[u] = total / (n - 1)
    labels = _two_means_1d(mu)
    kept = [i for i in range(n) if labels[i] == 1]
    diagnostics: dict = {"mu": mu}
    if malicious_truth is not None:
        dropped = set(range(n)) - set(kept)
        n_mal = len(malicious_truth)
        n_ben = n - n_mal
        diagnostics["tpr"] = (
            len(dropped & malicious_truth) / n_mal if n_mal else float("nan")
        )
        diagnostics["fpr"] = (
            len(dropped - malicious_truth) / n_ben if n_ben else float("nan")
        )
    return DefenseVerdict(kept=kept, diagnostics=diagnostics)


FILTER_DEFENSES = frozenset({"multi_krum", "afa", "faba", "dnc", "fang", "ibd"})
WEIGHT_DEFENSES = frozenset({"fltrust", "foolsgold"})
