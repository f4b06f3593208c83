"""Differentiable permutation optimization for the ranking attack.

The discrete search over permutations of the vulnerable sub-rankings is
relaxed through a temperature-scaled Sinkhorn operator (log domain, no
noise by default); gradients flow by exact reverse mode through the
unrolled normalization iterations, and the optimized doubly stochastic
matrices are rounded back to permutations with a Hungarian solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyInput, NumericOverflow
from .ranking import PermutationMatrix
from .vulnid import VulnerableMatrix


@dataclass(frozen=True)
class SinkhornConfig:
    iterations: int = 50
    temperature: float = 0.1
    epochs: int = 50
    learning_rate: float = 0.1
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    gumbel_noise: bool = False

    def __post_init__(self):
        if self.iterations < 1:
            raise DimensionMismatch("iterations must be >= 1")
        if self.temperature <= 0:
            raise DimensionMismatch("temperature must be positive")


@dataclass(frozen=True)
class ContinuousMatrix:
    """Unconstrained square parameter matrix driving one client's permutation."""

    values: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DimensionMismatch("continuous matrix must be square")
        if not np.isfinite(arr).all():
            raise NumericOverflow("continuous matrix has non-finite entries")
        object.__setattr__(self, "values", arr)

    @property
    def d(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class DoublyStochasticMatrix:
    """Non-negative square matrix whose rows and columns sum to 1 within tolerance."""

    values: np.ndarray
    tolerance: float = 1e-6

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def max_marginal_error(self) -> float:
        row = np.abs(self.values.sum(axis=1) - 1.0).max()
        col = np.abs(self.values.sum(axis=0) - 1.0).max()
        return float(max(row, col))


def sinkhorn(x: ContinuousMatrix, cfg: SinkhornConfig) -> DoublyStochasticMatrix:
    """Temperature-scaled Sinkhorn normalization S_L(X / tau)."""
    p, _ = kernels.sinkhorn_log_forward(x.values / cfg.temperature, cfg.iterations)
    return DoublyStochasticMatrix(values=p)


def _row_weight_vectors(r_v: list[VulnerableMatrix], a) -> list[np.ndarray]:
    return [vm.row_weights(a) for vm in r_v]


def attack_loss(
    x_list: list[ContinuousMatrix],
    r_v: list[VulnerableMatrix],
    a=None,
    cfg: SinkhornConfig = SinkhornConfig(),
) -> tuple[float, list[np.ndarray]]:
    """Negated reputation displacement and its gradient w.r.t. every X_u.

    loss = -|| sum_u b_u  -  sum_u b_u @ Sinkhorn(X_u / tau) ||_2, where b_u
    is client u's current reputation-weight vector over the vulnerable edges.
    """
    if len(x_list) != len(r_v):
        raise DimensionMismatch("one continuous matrix per vulnerable matrix")
    d = r_v[0].d
    for x, vm in zip(x_list, r_v):
        if x.d != d or vm.d != d:
            raise DimensionMismatch("all matrices must share dimension d")

    b_list = _row_weight_vectors(r_v, a)
    before = np.sum(b_list, axis=0)

    p_list = []
    stage_list = []
    for x in x_list:
        p, stages = kernels.sinkhorn_log_forward(
            x.values / cfg.temperature, cfg.iterations
        )
        p_list.append(p)
        stage_list.append(stages)

    after = np.zeros(d, dtype=np.float64)
    for b_u, p in zip(b_list, p_list):
        after += b_u @ p
    diff = before - after
    norm = float(np.linalg.norm(diff))
    loss = -norm

    grads = []
    d_after = diff / norm if norm > 1e-12 else np.zeros(d)
    for b_u, stages in zip(b_list, stage_list):
        grad_p = np.outer(b_u, d_after)
        grads.append(
            kernels.sinkhorn_log_backward(stages, grad_p) / cfg.temperature
        )
    return loss, grads


def optimize(
    r_v: list[VulnerableMatrix],
    cfg: SinkhornConfig = SinkhornConfig(),
    a=None,
    seed: int = 0,
) -> tuple[list[DoublyStochasticMatrix], dict]:
    """Adam ascent on the displacement objective; returns the best iterate seen.

    Tracking the best iterate makes the returned objective never worse than
    the initial one even when a late step overshoots.
    """
    if not r_v:
        raise EmptyInput("no vulnerable matrices to optimize")
    d = r_v[0].d
    rng = np.random.default_rng(seed)
    xs = [rng.random((d, d)) for _ in r_v]
    if cfg.gumbel_noise:
        for x in xs:
            u = rng.random((d, d))
            x += -np.log(-np.log(u + 1e-20) + 1e-20)

    m_state = [np.zeros((d, d)) for _ in r_v]
    v_state = [np.zeros((d, d)) for _ in r_v]
    trajectory = []
    best_obj = -np.inf
    best_xs = [x.copy() for x in xs]

    for step in range(cfg.epochs + 1):
        loss, grads = attack_loss(
            [ContinuousMatrix(x) for x in xs], r_v, a=a, cfg=cfg
        )
        obj = -loss
        trajectory.append(obj)
        if obj > best_obj:
            best_obj = obj
            best_xs = [x.copy() for x in xs]
        if step == cfg.epochs:
            break
        for u in range(len(xs)):
            m_state[u] = cfg.beta1 * m_state[u] + (1 - cfg.beta1) * grads[u]
            v_state[u] = cfg.beta2 * v_state[u] + (1 - cfg.beta2) * grads[u] ** 2
            m_hat = m_state[u] / (1 - cfg.beta1 ** (step + 1))
            v_hat = v_state[u] / (1 - cfg.beta2 ** (step + 1))
            xs[u] -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)

    result = [sinkhorn(ContinuousMatrix(x), cfg) for x in best_xs]
    diagnostics = {
        "objective_trajectory": trajectory,
        "initial_objective": trajectory[0],
        "final_objective": best_obj,
    }
    return result, diagnostics


def hungarian_round(p_b: DoublyStochasticMatrix) -> PermutationMatrix:
    """Permutation maximizing <P, P_b>_F, found by minimizing the negated matrix."""
    row_to_col = kernels.solve_assignment_min(-np.asarray(p_b.values, dtype=np.float64))
    return PermutationMatrix(n=p_b.d, cols=row_to_col + 1)


def matching_operator(x: np.ndarray) -> PermutationMatrix:
    """Hard matching M(X): the permutation maximizing <P, X>_F."""
    row_to_col = kernels.solve_assignment_min(-np.asarray(x, dtype=np.float64))
    return PermutationMatrix(n=x.shape[0], cols=row_to_col + 1)
