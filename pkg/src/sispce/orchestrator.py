"""Top-level surrogate-based samplers: SSIS and ASSIS.

Per level, a batch of true-model evaluations is added to a growing global
DoE, the subspace surrogate is refit, and the sampler is restarted from the
standard normal for the already-completed levels with the new surrogate (the
restart costs no true-model calls and keeps both sides of the next
smoothing-parameter search on one model). ASSIS additionally runs an
active-learning pass on the current ensemble before each tempering step and
a final pass, with the limit-state-distance learning function, once the exit
criterion fires. The failure probability is then estimated from a fresh
surrogate-only run over the discovered number of levels.

Randomness is split into independent streams for the DoE draws, the sampler
itself and the active-learning internals, so disabling learning
(eps_al = inf) reproduces the SSIS sample path bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import alearn, plspce, sis
from .alearn import LearnConfig
from .plspce import PlsConfig, PlsPceModel
from .probspace import LimitStateHandle
from .sis import Ensemble, LevelRecord, SisConfig, SisResult

__all__ = ["OrchestratorConfig", "RunResult", "run_ssis", "run_assis", "surrogate_restart"]


@dataclass(frozen=True)
class OrchestratorConfig:
    sis: SisConfig = field(default_factory=lambda: SisConfig(n=10_000, burn_in=30))
    surrogate: PlsConfig = field(default_factory=PlsConfig)
    n_doe_initial: int | None = None     # default 5 * dimension
    n_doe_per_level: int | None = None   # default: same as the initial batch
    eps_al: float = 0.02
    n_add: int = 1
    al_max_iterations: int = 30
    cov_scale: float | None = None
    max_levels: int = 50

    def doe_sizes(self, dimension: int) -> tuple[int, int]:
        initial = self.n_doe_initial if self.n_doe_initial is not None else 5 * dimension
        per_level = self.n_doe_per_level if self.n_doe_per_level is not None else initial
        return initial, per_level


@dataclass
class RunResult:
    p_hat: float
    n_levels: int
    lsf_calls: int
    level_records: list[LevelRecord]
    al_traces: list[list[dict]]
    converged: bool
    doe_points: np.ndarray
    doe_values: np.ndarray
    model: PlsPceModel | None
    method: str
    final_records: list[LevelRecord] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "p_hat": self.p_hat,
            "n_levels": self.n_levels,
            "lsf_calls": self.lsf_calls,
            "converged": self.converged,
            "level_records": [r.to_dict() for r in self.level_records],
            "final_records": [r.to_dict() for r in self.final_records],
            "al_traces": self.al_traces,
            "n_doe": int(self.doe_points.shape[0]),
        }


def surrogate_restart(model: PlsPceModel, config: SisConfig, levels: int,
                      rng: np.random.Generator) -> SisResult:
    """Re-run the sampler for exactly `levels` levels on the surrogate alone.

    Uses model.predict as the evaluator, so the true-model call counter is
    untouched by construction.
    """
    if levels < 1:
        raise ValueError("need at least one level to restart")
    return sis.run_sis(model.predict, model.dimension, config, rng,
                       run_exact_levels=levels, final_estimate=False)


def _draw_local_doe(ensemble: Ensemble, n_pick: int, existing: np.ndarray,
                    rng: np.random.Generator) -> np.ndarray:
    """Distinct ensemble rows, skipping near-duplicates of the existing DoE.

    The ensemble is already distributed according to the current importance
    density, so a uniform draw without replacement keeps that distribution.
    MCMC rejections leave repeated rows, hence the explicit duplicate filter.
    """
    perm = rng.permutation(ensemble.size)
    picked: list[np.ndarray] = []
    for idx in perm:
        cand = ensemble.points[idx]
        if existing.size and np.any(
            np.linalg.norm(existing - cand, axis=1) <= alearn.DUPLICATE_RADIUS
        ):
            continue
        if picked and np.any(
            np.linalg.norm(np.array(picked) - cand, axis=1) <= alearn.DUPLICATE_RADIUS
        ):
            continue
        picked.append(cand)
        if len(picked) == n_pick:
            break
    if not picked:
        raise RuntimeError("ensemble contains no usable DoE candidates")
    return np.array(picked)


def _run(lsf: LimitStateHandle, config: OrchestratorConfig,
         rng: np.random.Generator | int, active: bool) -> RunResult:
    d = lsf.dimension
    base = np.random.default_rng(rng)
    rng_doe, rng_main, rng_al = base.spawn(3)
    n_init, n_per_level = config.doe_sizes(d)
    calls_before = lsf.call_count

    learn_cfg = LearnConfig(
        eps_al=config.eps_al if active else math.inf,
        n_add=config.n_add,
        max_iterations=config.al_max_iterations,
        cov_scale=config.cov_scale,
        surrogate=config.surrogate,
    )

    # initial ensemble from the standard normal; g-values stay unset until the
    # first surrogate exists
    n = config.sis.n
    points = rng_main.standard_normal((n, d))
    ensemble = Ensemble(points, np.zeros(n), math.inf)

    u_doe = np.empty((0, d))
    g_doe = np.empty(0)
    model: PlsPceModel | None = None
    records: list[LevelRecord] = []
    al_traces: list[list[dict]] = []
    converged = False
    sigma = math.inf

    def fit_or_learn(pool: np.ndarray, mode: str,
                     p_runner: Callable[[PlsPceModel], float] | None = None):
        nonlocal u_doe, g_doe, model
        if active:
            result = alearn.active_learn(
                lsf, u_doe, g_doe, pool, mode, learn_cfg, rng_al,
                surrogate_p_runner=p_runner,
            )
            u_doe, g_doe, model = result.u_doe, result.g_doe, result.model
            al_traces.append(result.trace)
        else:
            model = plspce.fit(u_doe, g_doe, config.surrogate, variant="W")

    for level in range(1, config.max_levels + 1):
        # local DoE: level 1 draws i.i.d. from the nominal density, later
        # levels subsample the current ensemble
        if level == 1:
            local = rng_doe.standard_normal((n_init, d))
        else:
            local = _draw_local_doe(ensemble, n_per_level, u_doe, rng_doe)
        u_doe = np.vstack([u_doe, local])
        g_doe = np.concatenate([g_doe, np.asarray(lsf(local), dtype=float)])

        if level > 1:
            model = plspce.fit(u_doe, g_doe, config.surrogate, variant="W")
            restart = surrogate_restart(model, config.sis, level - 1, rng_main)
            ensemble = restart.ensemble
            sigma = ensemble.sigma
            if restart.aborted:
                return _failed_result(restart.aborted, lsf, calls_before, records,
                                      al_traces, u_doe, g_doe, model, active)

        fit_or_learn(ensemble.points, "intermediate")

        g_ens = np.asarray(model.predict(ensemble.points), dtype=float)
        sigma_new, saturated = sis.next_sigma(g_ens, sigma, config.sis.delta_target)
        log_num = sis._log_phi_neg(g_ens, sigma_new)
        log_w = log_num - sis._log_phi_neg(g_ens, sigma)
        s_hat = math.exp(sis._log_mean_exp(log_num)) if math.isinf(sigma) \
            else math.exp(sis._log_mean_exp(log_w))
        weights = sis._scaled_weights(log_w)
        weight_cov = sis._sample_cov(weights)

        try:
            seeds, seed_g = sis.resample(
                Ensemble(ensemble.points, g_ens, sigma), weights, n, rng_main
            )
        except sis.WeightDegenerationError as exc:
            return _failed_result(str(exc), lsf, calls_before, records, al_traces,
                                  u_doe, g_doe, model, active)
        ensemble, acc_rate = sis.acs_move(
            seeds, seed_g, model.predict, sigma_new, config.sis.burn_in, rng_main
        )
        sigma = sigma_new

        ec = sis.exit_cov(ensemble.g_values, sigma)
        records.append(LevelRecord(level, sigma, s_hat, weight_cov, acc_rate, ec, saturated))

        if ec <= config.sis.delta_target:
            converged = True
            break

    n_levels = len(records)
    if converged and active and not math.isinf(learn_cfg.eps_al):
        # final learning pass over the converged importance density, with a
        # fixed-seed surrogate estimator so the stopping statistic reflects
        # model changes rather than sampler noise
        al_seed = int(rng_al.integers(2**63))

        def p_runner(mdl: PlsPceModel) -> float:
            run = sis.run_sis(mdl.predict, d, config.sis,
                              np.random.default_rng(al_seed),
                              run_exact_levels=n_levels, final_estimate=True)
            return run.p_hat if run.p_hat is not None else 0.0

        fit_or_learn(ensemble.points, "final", p_runner)

    final = sis.run_sis(model.predict, d, config.sis, rng_main,
                        run_exact_levels=max(n_levels, 1), final_estimate=True)
    p_hat = final.p_hat if final.p_hat is not None else math.nan

    return RunResult(
        p_hat=p_hat,
        n_levels=n_levels,
        lsf_calls=lsf.call_count - calls_before,
        level_records=records,
        al_traces=al_traces,
        converged=converged,
        doe_points=u_doe,
        doe_values=g_doe,
        model=model,
        method="assis" if active else "ssis",
        final_records=final.levels,
    )


def _failed_result(reason: str, lsf: LimitStateHandle, calls_before: int,
                   records, al_traces, u_doe, g_doe, model, active) -> RunResult:
    return RunResult(
        p_hat=math.nan,
        n_levels=len(records),
        lsf_calls=lsf.call_count - calls_before,
        level_records=records,
        al_traces=al_traces,
        converged=False,
        doe_points=u_doe,
        doe_values=g_doe,
        model=model,
        method="assis" if active else "ssis",
    )


def run_ssis(lsf: LimitStateHandle, config: OrchestratorConfig,
             rng: np.random.Generator | int) -> RunResult:
    """Sequential subspace importance sampling (surrogate refits, no learning)."""
    return _run(lsf, config, rng, active=False)


def run_assis(lsf: LimitStateHandle, config: OrchestratorConfig,
              rng: np.random.Generator | int) -> RunResult:
    """Adaptive SSIS: per-level and final active learning on top of run_ssis."""
    return _run(lsf, config, rng, active=True)
