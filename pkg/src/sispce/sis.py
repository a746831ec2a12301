"""Sequential importance sampling with smoothed-indicator tempering.

The sampler walks a sequence of densities h_i proportional to
Phi(-G(u)/sigma_i) phi_d(u) with decreasing smoothing parameters sigma_i,
starting from the standard normal (sigma_0 = inf, where eta_0 = phi_d). Each
level picks sigma_i so the importance weights between consecutive levels hit
a target coefficient of variation, resamples the ensemble with those weights
and moves it by an adaptive conditional-normal MCMC kernel. The run stops
once the smoothed density is close enough to the optimal one, measured by
the CoV of I(G <= 0)/Phi(-G/sigma_i), and multiplies the per-level
normalizing-constant ratios into the failure-probability estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import log_ndtr

__all__ = [
    "Ensemble",
    "LevelRecord",
    "SisConfig",
    "SisResult",
    "WeightDegenerationError",
    "smooth_weight",
    "next_sigma",
    "ratio_estimate",
    "resample",
    "acs_move",
    "exit_cov",
    "run_sis",
]

_LOG_HALF = math.log(0.5)

# aCS proposal adaptation constants
_ACS_LAMBDA_INIT = 0.6
_ACS_TARGET_ACCEPT = 0.44

# sigma search bracket relative to the spread of the g-values
_SIGMA_BRACKET = 1e8
_SIGMA_BISECT_ITERS = 60


class WeightDegenerationError(RuntimeError):
    """All importance weights vanished; the level cannot be resampled."""


@dataclass
class Ensemble:
    points: np.ndarray   # (n, d)
    g_values: np.ndarray  # (n,)
    sigma: float          # smoothing parameter, inf at level 0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.g_values = np.asarray(self.g_values, dtype=float).reshape(-1)
        if self.points.shape[0] != self.g_values.shape[0]:
            raise ValueError("points and g_values disagree in length")
        if self.points.shape[0] < 2:
            raise ValueError("ensemble needs at least 2 samples")
        if not (self.sigma > 0):
            raise ValueError("sigma must be positive (inf allowed)")

    @property
    def size(self) -> int:
        return self.points.shape[0]


@dataclass
class LevelRecord:
    level: int
    sigma: float
    s_hat: float
    weight_cov: float
    acceptance_rate: float
    exit_cov: float
    sigma_saturated: bool = False

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "sigma": self.sigma,
            "s_hat": self.s_hat,
            "weight_cov": self.weight_cov,
            "acceptance_rate": self.acceptance_rate,
            "exit_cov": self.exit_cov,
            "sigma_saturated": self.sigma_saturated,
        }


@dataclass(frozen=True)
class SisConfig:
    n: int = 2000
    burn_in: int = 5
    delta_target: float = 1.5
    max_levels: int = 50

    def __post_init__(self):
        if self.n < 10:
            raise ValueError("need at least 10 samples per level")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.delta_target <= 0:
            raise ValueError("delta_target must be positive")


@dataclass
class SisResult:
    p_hat: float | None
    levels: list[LevelRecord]
    ensemble: Ensemble
    converged: bool
    aborted: str | None = None

    @property
    def n_levels(self) -> int:
        return len(self.levels)


def _sample_cov(x: np.ndarray) -> float:
    m = float(np.mean(x))
    if m == 0.0:
        return math.inf
    return float(np.std(x)) / abs(m)


def _scaled_weights(log_w: np.ndarray) -> np.ndarray:
    """exp(log_w) rescaled by the largest weight.

    The CoV and resampling probabilities are invariant to the scale, and the
    shift keeps the dominant weights out of the denormal range where squared
    terms would flush to zero.
    """
    top = float(np.max(log_w))
    if top == -math.inf:
        return np.zeros_like(log_w)
    return np.exp(log_w - top)


def _log_mean_exp(log_w: np.ndarray) -> float:
    top = float(np.max(log_w))
    if top == -math.inf:
        return -math.inf
    return top + math.log(float(np.mean(np.exp(log_w - top))))


def _log_phi_neg(g: np.ndarray, sigma: float) -> np.ndarray:
    """log Phi(-g/sigma); the sigma = inf limit is log Phi(0)."""
    if math.isinf(sigma):
        return np.full(np.shape(g), _LOG_HALF)
    return log_ndtr(-np.asarray(g, dtype=float) / sigma)


def smooth_weight(g, sigma_new: float, sigma_old: float):
    """Importance weight Phi(-g/sigma_new) / Phi(-g/sigma_old), log-space safe.

    sigma_old = inf denotes the level-0 smoothing where Phi(-g/sigma_old)
    degenerates to Phi(0) = 1/2.
    """
    if not 0 < sigma_new <= sigma_old:
        raise ValueError(f"need 0 < sigma_new <= sigma_old, got {sigma_new}, {sigma_old}")
    g_arr = np.asarray(g, dtype=float)
    w = np.exp(_log_phi_neg(g_arr, sigma_new) - _log_phi_neg(g_arr, sigma_old))
    return float(w) if np.isscalar(g) else w


class SigmaResult(NamedTuple):
    sigma: float
    saturated: bool


def next_sigma(g_values: np.ndarray, sigma_prev: float, delta_target: float) -> SigmaResult:
    """Smoothing parameter with weight CoV closest to the target.

    Minimizes (cov[w(sigma)] - delta_target)^2 over sigma in (0, sigma_prev]
    by bisection in log(sigma), using that the weight CoV grows monotonically
    as sigma decreases. When even the sharpest bracketed sigma cannot reach
    the target CoV, the lower bracket end is returned flagged as saturated.
    """
    if delta_target <= 0:
        raise ValueError("delta_target must be positive")
    g = np.asarray(g_values, dtype=float).reshape(-1)
    log_den = _log_phi_neg(g, sigma_prev)

    def cov_at(sig: float) -> float:
        return _sample_cov(_scaled_weights(log_ndtr(-g / sig) - log_den))

    spread = float(np.std(g))
    scale = spread if spread > 0 else max(1.0, abs(float(np.mean(g))))
    hi = min(sigma_prev, _SIGMA_BRACKET * scale)
    lo = min(scale / _SIGMA_BRACKET, hi)

    if cov_at(lo) < delta_target:
        return SigmaResult(lo, True)
    if cov_at(hi) >= delta_target:
        return SigmaResult(hi, False)

    log_lo, log_hi = math.log(lo), math.log(hi)
    for _ in range(_SIGMA_BISECT_ITERS):
        log_mid = 0.5 * (log_lo + log_hi)
        if cov_at(math.exp(log_mid)) >= delta_target:
            log_lo = log_mid  # CoV too large: sigma must grow
        else:
            log_hi = log_mid
    return SigmaResult(math.exp(0.5 * (log_lo + log_hi)), False)


def ratio_estimate(weights: np.ndarray) -> float:
    """Estimate of the ratio of consecutive normalizing constants: the weight mean."""
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if weights.size < 1:
        raise ValueError("need at least one weight")
    return float(np.mean(weights))


def resample(ensemble: Ensemble, weights: np.ndarray, n_out: int,
             rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Multinomial resampling with replacement, probabilities proportional to weights."""
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.shape[0] != ensemble.size:
        raise ValueError("weights do not match the ensemble")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    total = w.sum()
    if total <= 0.0:
        raise WeightDegenerationError("weight degeneration: all weights are zero")
    idx = rng.choice(ensemble.size, size=n_out, replace=True, p=w / total)
    return ensemble.points[idx], ensemble.g_values[idx]


def acs_move(seeds: np.ndarray, seed_g: np.ndarray,
             evaluator: Callable[[np.ndarray], np.ndarray], sigma: float,
             burn_in: int, rng: np.random.Generator) -> tuple[Ensemble, float]:
    """Adaptive conditional-sampling move toward Phi(-g/sigma) phi_d.

    Each seed runs an independent chain with the conditional-normal proposal
    u' = rho u + sqrt(1 - rho^2) xi where rho = sqrt(1 - lambda^2); burn_in
    intermediate states are discarded and the final state of each chain is
    returned. A single global lambda is adapted toward 0.44 acceptance over
    chain batches, so results are reproducible for a fixed generator and
    batch schedule. Returns the moved ensemble and the mean acceptance rate.
    """
    if not (0 < sigma < math.inf):
        raise ValueError("sigma must be positive and finite for the move step")
    seeds = np.asarray(seeds, dtype=float)
    seed_g = np.asarray(seed_g, dtype=float).reshape(-1)
    n, d = seeds.shape

    batch = max(10, n // 20)
    lam = _ACS_LAMBDA_INIT
    out_points = np.empty_like(seeds)
    out_g = np.empty(n)
    acc_rates = []

    batch_idx = 0
    for start in range(0, n, batch):
        batch_idx += 1
        sl = slice(start, min(start + batch, n))
        u = seeds[sl].copy()
        g = seed_g[sl].copy()
        log_phi = _log_phi_neg(g, sigma)
        m = u.shape[0]

        lam_eff = min(lam, 1.0)
        rho = math.sqrt(1.0 - lam_eff**2)
        accepted = 0
        proposed = 0
        for _ in range(burn_in + 1):
            cand = rho * u + lam_eff * rng.standard_normal((m, d))
            g_cand = np.asarray(evaluator(cand), dtype=float).reshape(-1)
            log_phi_cand = _log_phi_neg(g_cand, sigma)
            take = np.log(rng.uniform(size=m)) < (log_phi_cand - log_phi)
            u[take] = cand[take]
            g[take] = g_cand[take]
            log_phi[take] = log_phi_cand[take]
            accepted += int(np.count_nonzero(take))
            proposed += m

        out_points[sl] = u
        out_g[sl] = g
        rate = accepted / proposed if proposed else 0.0
        acc_rates.append(rate)
        lam = lam * math.exp((rate - _ACS_TARGET_ACCEPT) / math.sqrt(batch_idx))

    mean_rate = float(np.mean(acc_rates)) if acc_rates else 0.0
    return Ensemble(out_points, out_g, sigma), mean_rate


def exit_cov(g_values: np.ndarray, sigma: float) -> float:
    """Sample CoV of I(g <= 0)/Phi(-g/sigma); +inf when no sample fails."""
    if not (sigma > 0):
        raise ValueError("sigma must be positive")
    g = np.asarray(g_values, dtype=float).reshape(-1)
    failing = g <= 0.0
    if not np.any(failing):
        return math.inf
    r = np.zeros(g.shape)
    r[failing] = np.exp(-_log_phi_neg(g[failing], sigma))
    return _sample_cov(r)


def run_sis(evaluator: Callable[[np.ndarray], np.ndarray], dimension: int,
            config: SisConfig, rng: np.random.Generator,
            run_exact_levels: int | None = None,
            final_estimate: bool = True) -> SisResult:
    """Run the tempering loop (SIS-aCS).

    With run_exact_levels = L the sampler performs exactly L levels with
    adaptively chosen sigmas and skips the exit criterion; this is how
    surrogate-based restarts re-create an intermediate importance density.
    Otherwise levels are added until the exit CoV drops below the target or
    max_levels is exhausted (flagged non-converged). The final estimate
    multiplies the per-level ratio estimates with the importance-sampling
    correction on the last ensemble; it is None when final_estimate=False.
    """
    n = config.n
    points = rng.standard_normal((n, dimension))
    g = np.asarray(evaluator(points), dtype=float).reshape(-1)
    sigma = math.inf
    records: list[LevelRecord] = []
    converged = False
    aborted = None

    max_levels = run_exact_levels if run_exact_levels is not None else config.max_levels
    if max_levels < 1:
        raise ValueError("need at least one level")

    for level in range(1, max_levels + 1):
        sigma_new, saturated = next_sigma(g, sigma, config.delta_target)
        log_num = _log_phi_neg(g, sigma_new)
        log_w = log_num - _log_phi_neg(g, sigma)
        if math.isinf(sigma):
            # eta_0 is phi_d itself, so the first ratio estimate drops the
            # Phi(0) = 1/2 denominator that the generic weight carries
            s_hat = math.exp(_log_mean_exp(log_num))
        else:
            s_hat = math.exp(_log_mean_exp(log_w))
        weights = _scaled_weights(log_w)
        weight_cov = _sample_cov(weights)

        ensemble = Ensemble(points, g, sigma)
        try:
            seeds, seed_g = resample(ensemble, weights, n, rng)
        except WeightDegenerationError as exc:
            aborted = str(exc)
            break
        moved, acc_rate = acs_move(seeds, seed_g, evaluator, sigma_new, config.burn_in, rng)
        points, g, sigma = moved.points, moved.g_values, sigma_new

        ec = exit_cov(g, sigma)
        records.append(LevelRecord(level, sigma, s_hat, weight_cov, acc_rate, ec, saturated))
        if run_exact_levels is None and ec <= config.delta_target:
            converged = True
            break
    if run_exact_levels is not None:
        converged = len(records) == run_exact_levels and aborted is None

    p_hat = None
    if final_estimate and records and aborted is None:
        failing = g <= 0.0
        correction = np.zeros(g.shape)
        correction[failing] = np.exp(-_log_phi_neg(g[failing], sigma))
        p_hat = float(np.prod([r.s_hat for r in records]) * np.mean(correction))

    return SisResult(
        p_hat=p_hat,
        levels=records,
        ensemble=Ensemble(points, g, sigma),
        converged=converged,
        aborted=aborted,
    )
