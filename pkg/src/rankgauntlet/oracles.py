"""Independent brute-force oracles.

Each oracle re-derives a result by enumeration or direct definition, never
through the code paths it is meant to check.  They back the property tests
and the ``verify`` CLI subcommand.
"""

from __future__ import annotations

import itertools

import numpy as np

from .ranking import Ranking, selection_boundary


def vote_oracle(orders: list[np.ndarray]) -> np.ndarray:
    """1-D majority vote: argsort of the summed per-client argsorts.

    ``orders`` are 1-based edge permutations; returns the 1-based global order.
    """
    total = np.zeros(len(orders[0]), dtype=np.int64)
    for order in orders:
        total += np.argsort(np.asarray(order), kind="stable")
    return np.argsort(total, kind="stable") + 1


def top_set(order: np.ndarray, k_percent: float) -> frozenset[int]:
    """Selected edge IDs of a 1-based order vector under sparsity k."""
    t = selection_boundary(len(order), k_percent)
    return frozenset(int(e) for e in np.asarray(order)[t:])


def crossing_edges_by_enumeration(
    benign_orders: list[np.ndarray], m: int, k_percent: float
) -> tuple[set[int], frozenset[int]]:
    """Enumerate all (n!)^m malicious submissions; return every edge that can cross.

    The baseline selection is the benign-only vote over ``benign_orders``;
    an edge "crosses" when its top-k membership differs after adding the m
    malicious rankings.  Only m=1 is tractable; m>=2 enumerates the full
    product and is reserved for tiny n.
    """
    n = len(benign_orders[0])
    benign_rep = np.zeros(n, dtype=np.int64)
    for order in benign_orders:
        benign_rep += np.argsort(np.asarray(order), kind="stable") + 1
    baseline = top_set(np.argsort(benign_rep, kind="stable") + 1, k_percent)

    movable: set[int] = set()
    single = [np.array(p, dtype=np.int64) for p in itertools.permutations(range(1, n + 1))]
    for combo in itertools.product(single, repeat=m):
        rep = benign_rep.copy()
        for mal in combo:
            rep += np.argsort(mal, kind="stable") + 1
        attacked = top_set(np.argsort(rep, kind="stable") + 1, k_percent)
        movable |= baseline.symmetric_difference(attacked)
    return movable, baseline


def theorem_bounds_exact(
    benign_orders: list[np.ndarray], m: int, k_percent: float
) -> tuple[float, float, np.ndarray]:
    """Vulnerability bounds computed directly from the true benign aggregate."""
    n = len(benign_orders[0])
    rep = np.zeros(n, dtype=np.int64)
    for order in benign_orders:
        rep += np.argsort(np.asarray(order), kind="stable") + 1
    t = selection_boundary(n, k_percent)
    by_rep = np.argsort(rep, kind="stable")
    budget = m * (n - 1)
    if t < 1 or t >= n:
        return np.inf, -np.inf, rep
    w_max_out = rep[by_rep[t - 1]]
    w_min_in = rep[by_rep[t]]
    return w_max_out - budget, w_min_in + budget, rep


def brute_force_assignment(profit: np.ndarray) -> tuple[float, tuple[int, ...]]:
    """Maximize sum of profit[i, perm[i]] over all permutations; returns (value, perm)."""
    d = profit.shape[0]
    best_val = -np.inf
    best_perm: tuple[int, ...] = tuple(range(d))
    for perm in itertools.permutations(range(d)):
        val = sum(profit[i, perm[i]] for i in range(d))
        if val > best_val:
            best_val = val
            best_perm = perm
    return float(best_val), best_perm


def brute_force_attack_objective(
    row_weights: list[np.ndarray],
) -> tuple[float, list[tuple[int, ...]]]:
    """Exhaustive maximum of || sum_u b_u - sum_u b_u P_u || over all permutations P_u.

    ``row_weights[u]`` is the vector b_u with b_u[j] = reputation weight client u
    currently grants to the j-th vulnerable edge; applying a permutation P sends
    weight b_u[k] to edge P(k).
    """
    d = row_weights[0].size
    before = np.sum(row_weights, axis=0)
    perms = list(itertools.permutations(range(d)))
    best_val = -np.inf
    best: list[tuple[int, ...]] = []
    for combo in itertools.product(perms, repeat=len(row_weights)):
        after = np.zeros(d, dtype=np.float64)
        for b_u, perm in zip(row_weights, combo):
            after[list(perm)] += b_u
        val = float(np.linalg.norm(before - after))
        if val > best_val:
            best_val = val
            best = list(combo)
    return best_val, best


def central_difference_gradient(fn, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function of an array."""
    grad = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += step
        xm[idx] -= step
        grad[idx] = (fn(xp) - fn(xm)) / (2 * step)
    return grad


def random_ranking(rng: np.random.Generator, n: int, layer_id: int = 0) -> Ranking:
    return Ranking(layer_id=layer_id, order=rng.permutation(n) + 1)
