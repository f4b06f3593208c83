"""Poisoning attacks against ranking-based federated learning.

Every attack maps an :class:`AttackContext` (what the adversary knows this
round) to one ranking per layer per controlled client.  All attacks first
train honest local rankings from the controlled clients' own data; those
benign counterparts are kept in the result so the caller can measure how
far the submitted rankings moved the vote.

Only ``min_max`` and ``min_sum`` receive the benign clients' score vectors
(the update-aware relaxation); everything else sees nothing beyond ctx.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRange, MissingKnowledge
from .permopt import (
    ContinuousMatrix,
    SinkhornConfig,
    hungarian_round,
    optimize,
)
from .ranking import PermutationMatrix, Ranking, majority_vote, sort_get_index
from .subnet import (
    Dataset,
    Supernetwork,
    TrainConfig,
    apply_global_ranking,
    derive_shuffle_seed,
    ep_train_scores,
)
from .vulnid import (
    BenignEstimate,
    VulnerableMatrix,
    VulnerableRange,
    apply_zeta,
    estimate_alternative,
    estimate_historical,
    extract_vulnerable,
    vulnerable_bounds,
)


@dataclass
class AttackContext:
    """Adversary knowledge for one round."""

    round_t: int
    client_ids: list[int]
    datasets: list[Dataset]
    net: Supernetwork
    global_ranking: list[Ranking]  # broadcast this round, i.e. the round t-1 result
    U: int
    m: int
    k_percent: float
    zeta: float = 1.0
    estimation: str = "historical"
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    sinkhorn: SinkhornConfig = field(default_factory=SinkhornConfig)
    seed: int = 0
    prev_malicious: list[list[Ranking]] | None = None  # [client][layer] at t-1
    prev_round_clients: int | None = None
    prev_round_malicious: int | None = None


@dataclass
class AttackResult:
    rankings: list[list[Ranking]]  # [client][layer] submitted
    benign_rankings: list[list[Ranking]]  # [client][layer] honest counterparts
    diagnostics: dict = field(default_factory=dict)


def _train_local(ctx: AttackContext, grad_scale: float = 1.0, datasets=None):
    """Honest (or sign-flipped) local training for every controlled client."""
    datasets = ctx.datasets if datasets is None else datasets
    all_scores = []
    all_rankings = []
    for cid, data in zip(ctx.client_ids, datasets):
        net = apply_global_ranking(ctx.net, ctx.global_ranking)
        scores = ep_train_scores(
            net,
            data,
            ctx.train_cfg,
            shuffle_seed=derive_shuffle_seed(ctx.seed, cid, ctx.round_t),
            grad_scale=grad_scale,
        )
        all_scores.append(scores)
        all_rankings.append(
            [sort_get_index(s, layer_id=l) for l, s in enumerate(scores)]
        )
    return all_rankings, all_scores


def _estimate_layer(
    ctx: AttackContext, layer: int, layer_rankings: list[Ranking]
) -> BenignEstimate:
    """Benign-aggregate estimate for one layer, historical when possible.

    The historical estimate reconstructs the previous round's benign share
    and is rescaled to this round's benign head-count when the two rounds
    aggregated different client splits.
    """
    can_hist = (
        ctx.estimation == "historical"
        and ctx.round_t >= 2
        and ctx.prev_malicious is not None
        and ctx.prev_round_clients is not None
    )
    if can_hist:
        est = estimate_historical(
            ctx.global_ranking[layer],
            [per_client[layer] for per_client in ctx.prev_malicious],
            U=ctx.prev_round_clients,
            round_t=ctx.round_t,
        )
        # Calibrate the rank-grid reconstruction (slope ~U_prev per rank) to
        # the current benign aggregate's grid (slope ~U - m), so the band
        # covers comparable edge counts; membership, not magnitude, is what
        # the bound consumes.
        cur_benign = ctx.U - ctx.m
        if ctx.prev_round_clients > 0 and cur_benign != ctx.prev_round_clients:
            est = BenignEstimate(
                values=est.values * (cur_benign / ctx.prev_round_clients),
                method="historical",
                round_t=ctx.round_t,
                layer_id=est.layer_id,
            )
        return est
    return estimate_alternative(layer_rankings, U=ctx.U)


def _layer_range(
    ctx: AttackContext, layer: int, layer_rankings: list[Ranking]
) -> VulnerableRange:
    est = _estimate_layer(ctx, layer, layer_rankings)
    vrange = vulnerable_bounds(est, m=ctx.m, k_percent=ctx.k_percent)
    return apply_zeta(vrange, ctx.zeta)


def _apply_perm(benign: Ranking, vm: VulnerableMatrix, perm: PermutationMatrix) -> Ranking:
    """Splice the permuted vulnerable sub-ranking back into the full order."""
    order = benign.order.copy()
    source_col = vm.matrix.argmax(axis=1)
    dest_col = perm.cols[source_col] - 1
    order[vm.rows - 1] = vm.cols[dest_col]
    return Ranking(benign.layer_id, order)


def _reverse_layer_majority(layer_rankings: list[Ranking]) -> Ranking:
    return majority_vote(layer_rankings).reversed()


def _vem_like(ctx: AttackContext, full_range: bool, on_empty: str) -> AttackResult:
    benign, _ = _train_local(ctx)
    m = len(ctx.client_ids)
    n_layers = ctx.net.n_layers
    submitted = [[None] * n_layers for _ in range(m)]
    diag_layers = []
    estimated_sets = []

    for l in range(n_layers):
        layer_rankings = [benign[u][l] for u in range(m)]
        if full_range:
            n = layer_rankings[0].n
            vrange = VulnerableRange(
                layer_id=l,
                lower=-np.inf,
                upper=np.inf,
                edge_ids=np.arange(1, n + 1),
                zeta=ctx.zeta,
                reputations=np.zeros(n),
            )
        else:
            vrange = _layer_range(ctx, l, layer_rankings)
        estimated_sets.append(frozenset(int(e) for e in vrange.edge_ids))

        if vrange.is_empty or vrange.edge_ids.size < 2:
            # Nothing (or a single fixed point) to permute in this layer.
            if on_empty == "reverse":
                fallback = _reverse_layer_majority(layer_rankings)
                for u in range(m):
                    submitted[u][l] = fallback
            else:
                for u in range(m):
                    submitted[u][l] = layer_rankings[u]
            diag_layers.append(
                {"layer": l, "n_vulnerable": int(vrange.edge_ids.size), "skipped": True}
            )
            continue

        r_v = extract_vulnerable(layer_rankings, vrange)
        ds_list, opt_diag = optimize(
            r_v,
            cfg=ctx.sinkhorn,
            seed=derive_shuffle_seed(ctx.seed, 10_000 + l, ctx.round_t),
        )
        for u in range(m):
            perm = hungarian_round(ds_list[u])
            submitted[u][l] = _apply_perm(layer_rankings[u], r_v[u], perm)
        diag_layers.append(
            {
                "layer": l,
                "n_vulnerable": int(vrange.edge_ids.size),
                "lower": float(vrange.lower),
                "upper": float(vrange.upper),
                "initial_objective": opt_diag["initial_objective"],
                "final_objective": opt_diag["final_objective"],
                "skipped": False,
            }
        )

    return AttackResult(
        rankings=submitted,
        benign_rankings=benign,
        diagnostics={"layers": diag_layers, "estimated_sets": estimated_sets},
    )


def vem(ctx: AttackContext, on_empty: str = "benign") -> AttackResult:
    """Vulnerable edge manipulation: estimate, bound, optimize, round, splice.

    ``on_empty`` selects the per-layer fallback when no edge is vulnerable:
    "benign" (default) leaves that layer honest, "reverse" submits the
    reversed local majority vote instead.
    """
    return _vem_like(ctx, full_range=False, on_empty=on_empty)


def optimize_all(ctx: AttackContext) -> AttackResult:
    """Ablation: run the optimization over every edge, skipping identification."""
    return _vem_like(ctx, full_range=True, on_empty="benign")


def reverse_vulnerable(ctx: AttackContext, on_empty: str = "error") -> AttackResult:
    """Ablation: reverse each client's vulnerable sub-ranking, no optimization."""
    benign, _ = _train_local(ctx)
    m = len(ctx.client_ids)
    n_layers = ctx.net.n_layers
    submitted = [[None] * n_layers for _ in range(m)]
    diag_layers = []
    for l in range(n_layers):
        layer_rankings = [benign[u][l] for u in range(m)]
        vrange = _layer_range(ctx, l, layer_rankings)
        if vrange.is_empty:
            if on_empty == "error":
                raise EmptyRange(f"layer {l}: no vulnerable edges")
            for u in range(m):
                submitted[u][l] = layer_rankings[u]
            diag_layers.append({"layer": l, "n_vulnerable": 0, "skipped": True})
            continue
        r_v = extract_vulnerable(layer_rankings, vrange)
        for u in range(m):
            order = layer_rankings[u].order.copy()
            rows0 = r_v[u].rows - 1
            order[rows0] = order[rows0][::-1]
            submitted[u][l] = Ranking(l, order)
        diag_layers.append(
            {"layer": l, "n_vulnerable": int(vrange.edge_ids.size), "skipped": False}
        )
    return AttackResult(
        rankings=submitted,
        benign_rankings=benign,
        diagnostics={"layers": diag_layers},
    )


def reverse_rank(ctx: AttackContext) -> AttackResult:
    """Majority-vote the controlled clients' rankings, reverse, replicate."""
    benign, _ = _train_local(ctx)
    m = len(ctx.client_ids)
    reversed_layers = [
        _reverse_layer_majority([benign[u][l] for u in range(m)])
        for l in range(ctx.net.n_layers)
    ]
    return AttackResult(
        rankings=[list(reversed_layers) for _ in range(m)],
        benign_rankings=benign,
    )


def label_flip(ctx: AttackContext) -> AttackResult:
    """Train on labels flipped to C - y - 1."""
    benign, _ = _train_local(ctx)
    flipped = [
        Dataset(
            features=d.features,
            labels=d.n_classes - 1 - d.labels,
            n_classes=d.n_classes,
        )
        for d in ctx.datasets
    ]
    poisoned, _ = _train_local(ctx, datasets=flipped)
    return AttackResult(rankings=poisoned, benign_rankings=benign)


def noise_attack(ctx: AttackContext, sigma: float | None = None) -> AttackResult:
    """Add Gaussian noise to the trained scores before ranking.

    Default sigma is each layer's trained-score standard deviation.
    """
    benign, scores = _train_local(ctx)
    submitted = []
    for u, cid in enumerate(ctx.client_ids):
        rng = np.random.default_rng(derive_shuffle_seed(ctx.seed, 20_000 + cid, ctx.round_t))
        noisy_layers = []
        for l, s in enumerate(scores[u]):
            scale = float(np.std(s)) if sigma is None else float(sigma)
            noisy = s + rng.normal(0.0, scale, size=s.size) if scale > 0 else s
            noisy_layers.append(sort_get_index(noisy, layer_id=l))
        submitted.append(noisy_layers)
    return AttackResult(rankings=submitted, benign_rankings=benign)


def grad_ascent(ctx: AttackContext) -> AttackResult:
    """Local training with the loss gradient sign flipped."""
    benign, _ = _train_local(ctx)
    poisoned, _ = _train_local(ctx, grad_scale=-1.0)
    return AttackResult(rankings=poisoned, benign_rankings=benign)


def _score_space_attack(
    ctx: AttackContext, all_benign_scores, constraint: str
) -> AttackResult:
    """Common body of min_max / min_sum: binary-search the perturbation scale."""
    if not all_benign_scores:
        raise MissingKnowledge(f"{constraint} requires the benign score vectors")
    benign, _ = _train_local(ctx)
    stacked = np.stack([np.concatenate(s) for s in all_benign_scores])
    avg = stacked.mean(axis=0)
    norm = np.linalg.norm(avg)
    pert = -avg / norm if norm > 0 else -avg

    diffs = stacked[:, None, :] - stacked[None, :, :]
    pair_dist_sq = (diffs**2).sum(axis=2)
    if constraint == "min_max":
        threshold = np.sqrt(pair_dist_sq.max())

        def feasible(gamma: float) -> bool:
            cand = avg + gamma * pert
            return np.sqrt(((stacked - cand) ** 2).sum(axis=1)).max() <= threshold

    else:
        threshold = pair_dist_sq.sum(axis=1).max()

        def feasible(gamma: float) -> bool:
            cand = avg + gamma * pert
            return ((stacked - cand) ** 2).sum(axis=1).sum() <= threshold

    lo, hi = 0.0, 10.0
    if feasible(hi):
        lo = hi
    else:
        for _ in range(20):
            mid = (lo + hi) / 2.0
            if feasible(mid):
                lo = mid
            else:
                hi = mid
    malicious = avg + lo * pert

    offsets = np.cumsum([0] + list(ctx.net.edge_counts))
    layers = [
        sort_get_index(malicious[offsets[l] : offsets[l + 1]], layer_id=l)
        for l in range(ctx.net.n_layers)
    ]
    return AttackResult(
        rankings=[list(layers) for _ in ctx.client_ids],
        benign_rankings=benign,
        diagnostics={"gamma": lo},
    )


def min_max(ctx: AttackContext, all_benign_scores) -> AttackResult:
    """Score-space perturbation bounded by the largest benign pairwise distance."""
    return _score_space_attack(ctx, all_benign_scores, "min_max")


def min_sum(ctx: AttackContext, all_benign_scores) -> AttackResult:
    """Score-space perturbation bounded by the largest benign sum of squared distances."""
    return _score_space_attack(ctx, all_benign_scores, "min_sum")


ATTACKS = {
    "vem": vem,
    "optimize_all": optimize_all,
    "reverse_vulnerable": reverse_vulnerable,
    "reverse_rank": reverse_rank,
    "label_flip": label_flip,
    "noise": noise_attack,
    "grad_ascent": grad_ascent,
    "min_max": min_max,
    "min_sum": min_sum,
}

UPDATE_AWARE = frozenset({"min_max", "min_sum"})
