"""Active learning of subspace PCE surrogates from pool samples.

The in-fill criterion propagates the large-sample covariance of the fitted
parameters (expansion coefficients and each subspace direction) through a
first-order expansion of the surrogate, which yields a pointwise predictive
standard deviation without any extra model evaluations. Two learning modes
exist: intermediate levels rank pool points by that standard deviation
alone, while the final level divides by |G_hat| to prioritize points close
to the predicted limit-state surface. Points are added per latent-space
k-means cluster so multiple relevant regions are refined simultaneously.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import plspce
from .plspce import PlsConfig, PlsPceModel

__all__ = [
    "ParameterBlocks",
    "LearnConfig",
    "ActiveLearnResult",
    "gradient_blocks",
    "parameter_blocks",
    "predictive_std",
    "learning_value",
    "subspace_kmeans",
    "active_learn",
]

# points closer than this (euclidean) to an existing DoE entry are never re-evaluated
DUPLICATE_RADIUS = 1e-10


class UnsupportedVariantError(ValueError):
    """Predictive-uncertainty machinery runs on W-variant models only."""


@dataclass
class ParameterBlocks:
    coeff_block: np.ndarray            # (P, P) covariance of the expansion coefficients
    subspace_blocks: list[np.ndarray]  # m blocks of (d, d) for the directions
    residual_var: float
    singular: bool = False             # any block built through a pseudo-inverse


def _check_w_variant(model: PlsPceModel) -> None:
    if model.variant != "W":
        raise UnsupportedVariantError(
            "active-learning gradients require a W-variant model"
        )


def _pool_gradients(model: PlsPceModel, u: np.ndarray):
    """Coefficient-gradient design and per-direction scalar factors for many points.

    Returns (psi, factors, centered) where psi is (n, P), factors is a list of
    m arrays (n,) with factor_j(u) such that dY/dw_j = factor_j * (u - mu),
    and centered is u - mu with shape (n, d).
    """
    _check_w_variant(model)
    pts = np.atleast_2d(np.asarray(u, dtype=float))
    centered = pts - model.mu_u
    if model.n_directions == 0:
        return np.zeros((pts.shape[0], 0)), [], centered
    z = centered @ model.projection
    psi = model.index_set.design_matrix(z)
    factors = [
        model.index_set.derivative_matrix(z, j) @ model.coefficients
        for j in range(model.n_directions)
    ]
    return psi, factors, centered


def gradient_blocks(model: PlsPceModel, u: np.ndarray) -> list[np.ndarray]:
    """Gradients of the prediction w.r.t. each parameter group at one point.

    Entry 0 is the vector of basis evaluations (the design-matrix row); entry
    j >= 1 is (u - mu) scaled by the derivative of the expansion along the
    j-th latent coordinate, following the product rule with
    d psi_n / dx = sqrt(n) psi_{n-1}.
    """
    psi, factors, centered = _pool_gradients(model, u)
    blocks = [psi[0]]
    blocks.extend(f[0] * centered[0] for f in factors)
    return blocks


def parameter_blocks(model: PlsPceModel, u_doe: np.ndarray, y_doe: np.ndarray,
                     cov_scale: float | None = None) -> ParameterBlocks:
    """Blockwise parameter covariance sigma_eps^2 * cov_scale * (A_j^T A_j)^-1.

    cov_scale defaults to 1/n_doe; passing 1.0 gives the classical
    linear-regression covariance instead. Singular normal matrices fall back
    to the pseudo-inverse and set the `singular` flag.
    """
    _check_w_variant(model)
    u_doe = np.atleast_2d(np.asarray(u_doe, dtype=float))
    n = u_doe.shape[0]
    scale = (1.0 / n) if cov_scale is None else float(cov_scale)
    rvar = model.residual_var

    psi, factors, centered = _pool_gradients(model, u_doe)
    singular = False

    def inv_gram(a: np.ndarray) -> np.ndarray:
        nonlocal singular
        gram = a.T @ a
        try:
            inv = np.linalg.inv(gram)
        except np.linalg.LinAlgError:
            singular = True
            inv = np.linalg.pinv(gram, hermitian=True)
        else:
            if not np.all(np.isfinite(inv)) or np.linalg.cond(gram) > 1e12:
                singular = True
                inv = np.linalg.pinv(gram, hermitian=True)
        return 0.5 * (inv + inv.T)

    coeff_block = scale * rvar * inv_gram(psi) if psi.shape[1] else np.zeros((0, 0))
    sub_blocks = [scale * rvar * inv_gram(f[:, None] * centered) for f in factors]
    return ParameterBlocks(coeff_block, sub_blocks, rvar, singular)


def predictive_std(model: PlsPceModel, blocks: ParameterBlocks, u: np.ndarray):
    """Delta-method standard deviation of the prediction at u ((d,) or (n, d)).

    sqrt( sum_j g_j^T Sigma_j g_j ) with the gradient blocks of this model;
    the response-to-limit-state factor is one in magnitude for
    threshold-minus-response limit states and squares away regardless.
    """
    u_arr = np.asarray(u, dtype=float)
    squeeze = u_arr.ndim == 1
    psi, factors, centered = _pool_gradients(model, u_arr)
    if psi.shape[1]:
        var = np.einsum("np,pq,nq->n", psi, blocks.coeff_block, psi)
    else:
        var = np.zeros(psi.shape[0])
    for f, sigma in zip(factors, blocks.subspace_blocks):
        quad = np.einsum("nd,de,ne->n", centered, sigma, centered)
        var = var + f**2 * quad
    out = np.sqrt(np.maximum(var, 0.0))
    return float(out[0]) if squeeze else out


def learning_value(u: np.ndarray, model: PlsPceModel, blocks: ParameterBlocks,
                   mode: str):
    """Learning function: predictive std, divided by |G_hat| after the final level."""
    if mode not in ("intermediate", "final"):
        raise ValueError(f"mode must be 'intermediate' or 'final', got {mode!r}")
    std = predictive_std(model, blocks, u)
    if mode == "intermediate":
        return std
    g_hat = model.predict(u)
    g_arr = np.atleast_1d(np.asarray(g_hat, dtype=float))
    scale = float(np.max(np.abs(g_arr), initial=0.0))
    guard = 1e-12 * scale if scale > 0 else 1e-300
    val = np.atleast_1d(std) / np.maximum(np.abs(g_arr), guard)
    return float(val[0]) if np.asarray(u).ndim == 1 else val


def subspace_kmeans(pool: np.ndarray, model: PlsPceModel, n_add: int,
                    rng: np.random.Generator) -> list[np.ndarray]:
    """Cluster pool points in the latent space; returns index arrays per cluster.

    Uses k-means++ seeding and at most 100 Lloyd iterations with a 1e-6
    movement tolerance; deterministic for a fixed generator. Degenerate pools
    with fewer distinct latent points than requested clusters yield fewer
    clusters.
    """
    pool = np.atleast_2d(np.asarray(pool, dtype=float))
    if pool.shape[0] < n_add:
        raise ValueError("pool smaller than the requested number of clusters")
    if n_add == 1 or model.n_directions == 0:
        return [np.arange(pool.shape[0])]
    z = model.latent_coords(pool)
    uniq = np.unique(z, axis=0)
    k = min(n_add, uniq.shape[0])

    # k-means++ seeding
    centers = np.empty((k, z.shape[1]))
    first = int(rng.integers(z.shape[0]))
    centers[0] = z[first]
    d2 = np.sum((z - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j] = z[int(rng.integers(z.shape[0]))]
            continue
        centers[j] = z[int(rng.choice(z.shape[0], p=d2 / total))]
        d2 = np.minimum(d2, np.sum((z - centers[j]) ** 2, axis=1))

    labels = np.zeros(z.shape[0], dtype=int)
    for _ in range(100):
        dists = np.sum((z[:, None, :] - centers[None, :, :]) ** 2, axis=2)
        labels = np.argmin(dists, axis=1)
        moved = 0.0
        for j in range(k):
            members = z[labels == j]
            if members.shape[0] == 0:
                continue
            new_center = members.mean(axis=0)
            moved = max(moved, float(np.linalg.norm(new_center - centers[j])))
            centers[j] = new_center
        if moved < 1e-6:
            break

    return [np.flatnonzero(labels == j) for j in range(k) if np.any(labels == j)]


@dataclass(frozen=True)
class LearnConfig:
    eps_al: float = 0.02
    n_add: int = 1
    max_iterations: int = 30
    cov_scale: float | None = None  # None selects the default 1/n_doe scaling
    surrogate: PlsConfig = field(default_factory=PlsConfig)

    def __post_init__(self):
        if self.eps_al <= 0:
            raise ValueError("eps_al must be positive")
        if self.n_add < 1:
            raise ValueError("n_add must be >= 1")


@dataclass
class ActiveLearnResult:
    u_doe: np.ndarray
    g_doe: np.ndarray
    model: PlsPceModel
    terminated: bool
    iterations: int
    added: int
    trace: list[dict]


def _termination_stat_intermediate(model: PlsPceModel, blocks: ParameterBlocks,
                                   pool: np.ndarray) -> float:
    g_pool = np.atleast_1d(model.predict(pool))
    denom = abs(float(np.mean(g_pool)))
    floor = 1e-8 * float(np.std(g_pool))
    denom = max(denom, floor, 1e-300)
    return float(np.max(predictive_std(model, blocks, pool))) / denom


def active_learn(g_true: Callable[[np.ndarray], np.ndarray],
                 u_doe: np.ndarray, g_doe: np.ndarray, pool: np.ndarray,
                 mode: str, config: LearnConfig, rng: np.random.Generator,
                 surrogate_p_runner: Callable[[PlsPceModel], float] | None = None,
                 p_last: float | None = None) -> ActiveLearnResult:
    """Grow the DoE until the mode's termination criterion is met.

    Each iteration refits the surrogate, checks termination (intermediate:
    the pool maximum of the relative predictive std; final: the relative
    change of the surrogate-only probability estimate produced by
    surrogate_p_runner), then evaluates the true model at the best point of
    each latent-space cluster. Selected points leave the pool; points
    duplicating the DoE within DUPLICATE_RADIUS are never re-evaluated.
    """
    if mode not in ("intermediate", "final"):
        raise ValueError(f"mode must be 'intermediate' or 'final', got {mode!r}")
    if mode == "final" and surrogate_p_runner is None and not math.isinf(config.eps_al):
        raise ValueError("final mode needs a surrogate_p_runner for the p-hat criterion")
    u_doe = np.atleast_2d(np.asarray(u_doe, dtype=float)).copy()
    g_doe = np.asarray(g_doe, dtype=float).reshape(-1).copy()
    pool = np.atleast_2d(np.asarray(pool, dtype=float)).copy()
    if pool.shape[0] == 0:
        raise ValueError("pool must be nonempty")

    trace: list[dict] = []
    added = 0
    terminated = False
    model = plspce.fit(u_doe, g_doe, config.surrogate, variant="W")

    for iteration in range(config.max_iterations + 1):
        if iteration > 0:
            model = plspce.fit(u_doe, g_doe, config.surrogate, variant="W")

        # termination: an infinite threshold is met by construction, which
        # also skips the surrogate run so disabled learning stays inert
        if math.isinf(config.eps_al):
            terminated = True
            stat = math.nan
        elif mode == "intermediate":
            blocks = parameter_blocks(model, u_doe, g_doe, config.cov_scale)
            stat = _termination_stat_intermediate(model, blocks, pool)
            terminated = stat <= config.eps_al
        else:
            p_now = surrogate_p_runner(model)
            if p_last is None:
                stat = math.inf
            elif p_now == p_last:
                stat = 0.0
            elif p_now == 0.0:
                stat = math.inf
            else:
                stat = abs(p_now - p_last) / abs(p_now)
            p_last = p_now
            terminated = stat <= config.eps_al
        trace.append({"iteration": iteration, "mode": mode, "stat": stat,
                      "n_doe": int(u_doe.shape[0])})
        if terminated or pool.shape[0] == 0 or iteration == config.max_iterations:
            break

        if mode == "intermediate":
            scores = learning_value(pool, model, blocks, mode)
        else:
            blocks = parameter_blocks(model, u_doe, g_doe, config.cov_scale)
            scores = learning_value(pool, model, blocks, mode)
        clusters = subspace_kmeans(pool, model, min(config.n_add, pool.shape[0]), rng)

        chosen: list[int] = []
        for members in clusters:
            order = members[np.argsort(-scores[members], kind="stable")]
            for idx in order:
                cand = pool[idx]
                dup = np.any(np.linalg.norm(u_doe - cand, axis=1) <= DUPLICATE_RADIUS)
                if not dup and not any(
                    np.linalg.norm(pool[c] - cand) <= DUPLICATE_RADIUS for c in chosen
                ):
                    chosen.append(int(idx))
                    break
        if not chosen:
            break

        new_points = pool[chosen]
        new_g = np.atleast_1d(np.asarray(g_true(new_points), dtype=float))
        for pt, gval, idx in zip(new_points, new_g, chosen):
            trace.append({
                "iteration": iteration, "mode": mode, "added_point": pt.tolist(),
                "g_value": float(gval), "learning_value": float(scores[idx]),
            })
        u_doe = np.vstack([u_doe, new_points])
        g_doe = np.concatenate([g_doe, new_g])
        pool = np.delete(pool, chosen, axis=0)
        added += len(chosen)

    return ActiveLearnResult(
        u_doe=u_doe, g_doe=g_doe, model=model, terminated=terminated,
        iterations=len([t for t in trace if "stat" in t]), added=added, trace=trace,
    )
