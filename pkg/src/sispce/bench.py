"""Experiment runner: repeated seeded runs, error metrics and result files.

Every repetition draws its generator from SeedSequence(base_seed, rep), so
reports are reproducible and independent of execution order. Aggregates
follow the usual decomposition

    rel_bias = (p - mean[p_hat]) / p
    cov      = std[p_hat] / mean[p_hat]          (population std)
    rel_rmse = sqrt(mean[(p - p_hat)^2]) / p
             = sqrt(rel_bias^2 + (mean/p)^2 cov^2)   (exact identity)

against the problem's reference probability.
"""

from __future__ import annotations

import csv
import importlib.resources
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import orchestrator, sis
from .orchestrator import OrchestratorConfig
from .plspce import PlsConfig
from .probspace import mc_estimate
from .problems import BenchmarkProblem, get_problem, registry
from .sis import SisConfig

__all__ = [
    "RepRecord",
    "ExperimentReport",
    "run_experiment",
    "emit_outputs",
    "oracle_check",
    "config_from_overrides",
]

METHODS = ("mc", "sis", "ssis", "assis")


@dataclass
class RepRecord:
    rep: int
    p_hat: float
    lsf_calls: int
    n_levels: int
    converged: bool
    error: str | None = None


@dataclass
class ExperimentReport:
    problem: str
    method: str
    p_ref: float
    base_seed: int
    reps: list[RepRecord]
    n_failed: int = 0
    mean_p_hat: float = math.nan
    rel_bias: float = math.nan
    cov: float = math.nan
    rel_rmse: float = math.nan
    mean_lsf_calls: float = math.nan

    @property
    def rel_errors(self) -> list[float]:
        return [r.p_hat / self.p_ref for r in self.reps if r.error is None]

    def finalize(self) -> "ExperimentReport":
        good = np.array([r.p_hat for r in self.reps if r.error is None])
        self.n_failed = len(self.reps) - good.size
        if good.size == 0:
            return self
        mean = float(np.mean(good))
        self.mean_p_hat = mean
        self.rel_bias = (self.p_ref - mean) / self.p_ref
        self.cov = float(np.std(good) / mean) if good.size >= 2 and mean != 0 else math.nan
        self.rel_rmse = float(np.sqrt(np.mean((self.p_ref - good) ** 2)) / self.p_ref)
        self.mean_lsf_calls = float(
            np.mean([r.lsf_calls for r in self.reps if r.error is None])
        )
        return self

    def to_summary(self) -> dict:
        return _sanitize({
            "problem": self.problem,
            "method": self.method,
            "p_ref": self.p_ref,
            "base_seed": self.base_seed,
            "n_reps": len(self.reps),
            "n_failed": self.n_failed,
            "aggregates": {
                "mean_p_hat": self.mean_p_hat,
                "rel_bias": self.rel_bias,
                "cov": self.cov,
                "rel_rmse": self.rel_rmse,
                "mean_lsf_calls": self.mean_lsf_calls,
            },
            "repetitions": [asdict(r) for r in self.reps],
        })


def _sanitize(obj):
    """NaN/inf become null so summaries stay valid JSON."""
    if isinstance(obj, dict):
        return {k: _sanitize(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_sanitize(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def config_from_overrides(overrides: dict | None, method: str,
                          problem: BenchmarkProblem) -> dict:
    """Merge user overrides over the per-method defaults.

    Recognized keys (flat or under [sis]/[surrogate] tables): n, burn_in,
    delta_target, max_levels, n_doe_initial, n_doe_per_level, eps_al, n_add,
    al_max_iterations, cov_scale, mc_n, and the surrogate knobs
    max_total_degree, q_norm, m_max, eps_w, eps_y, newton_max_iter.
    """
    overrides = dict(overrides or {})
    sis_over = dict(overrides.pop("sis", {}))
    sur_over = dict(overrides.pop("surrogate", {}))
    for key in ("n", "burn_in", "delta_target", "max_levels"):
        if key in overrides:
            sis_over.setdefault(key, overrides.pop(key))

    if method == "mc":
        return {"mc_n": int(overrides.get("mc_n", 1_000_000))}
    if method == "sis":
        defaults = {"n": 2000, "burn_in": 5, "delta_target": 1.5, "max_levels": 50}
        defaults.update(sis_over)
        return {"sis": SisConfig(**defaults)}

    sis_defaults = {"n": 10_000, "burn_in": 30, "delta_target": 1.5, "max_levels": 50}
    max_levels = sis_defaults.pop("max_levels")
    sis_over = dict(sis_over)
    if "max_levels" in sis_over:
        max_levels = sis_over.pop("max_levels")
    sis_defaults.update(sis_over)
    cfg = OrchestratorConfig(
        sis=SisConfig(**sis_defaults, max_levels=max_levels),
        surrogate=PlsConfig(**sur_over),
        n_doe_initial=overrides.get("n_doe_initial"),
        n_doe_per_level=overrides.get("n_doe_per_level"),
        eps_al=float(overrides.get("eps_al", 0.02)),
        n_add=int(overrides.get("n_add", problem.n_add)),
        al_max_iterations=int(overrides.get("al_max_iterations", 30)),
        cov_scale=overrides.get("cov_scale"),
        max_levels=int(overrides.get("orchestrator_max_levels", max_levels)),
    )
    return {"orchestrator": cfg}


def _single_run(problem: BenchmarkProblem, method: str, cfg: dict,
                seed_seq: np.random.SeedSequence) -> RepRecord:
    handle = problem.make_handle()
    rng = np.random.default_rng(seed_seq)
    if method == "mc":
        est = mc_estimate(handle, cfg["mc_n"], rng)
        return RepRecord(0, est.p_hat, handle.call_count, 1, est.failures > 0)
    if method == "sis":
        res = sis.run_sis(handle, problem.dimension, cfg["sis"], rng)
        p = res.p_hat if res.p_hat is not None else math.nan
        return RepRecord(0, p, handle.call_count, res.n_levels, res.converged)
    runner = orchestrator.run_assis if method == "assis" else orchestrator.run_ssis
    res = runner(handle, cfg["orchestrator"], rng)
    return RepRecord(0, res.p_hat, res.lsf_calls, res.n_levels, res.converged)


def run_experiment(problem: BenchmarkProblem | str, method: str, reps: int,
                   base_seed: int, overrides: dict | None = None) -> ExperimentReport:
    """Run `reps` independent seeded repetitions and aggregate the metrics.

    Individual failures (exceptions or NaN estimates) are recorded on the
    repetition and excluded from the aggregates.
    """
    if isinstance(problem, str):
        problem = get_problem(problem)
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method!r}")
    if reps < 1:
        raise ValueError("need at least one repetition")
    cfg = config_from_overrides(overrides, method, problem)

    records = []
    for rep in range(reps):
        seq = np.random.SeedSequence(entropy=base_seed, spawn_key=(rep,))
        try:
            record = _single_run(problem, method, cfg, seq)
            record.rep = rep
            if not math.isfinite(record.p_hat):
                record.error = "run produced a non-finite estimate"
        except Exception as exc:  # noqa: BLE001 - repetitions must not kill the batch
            record = RepRecord(rep, math.nan, 0, 0, False, error=str(exc))
        records.append(record)

    return ExperimentReport(
        problem=problem.name, method=method, p_ref=problem.p_ref,
        base_seed=base_seed, reps=records,
    ).finalize()


def oracle_check(problem: BenchmarkProblem | str, reps: int = 50, base_seed: int = 777,
                 n_per_level: int = 10_000) -> dict:
    """High-effort surrogate-free sampling oracle for validating a registry entry.

    Runs surrogate-free SIS with n_per_level samples per level and compares
    the mean estimate against the registered reference; agreement within
    three standard errors of the oracle mean passes.
    """
    if isinstance(problem, str):
        problem = get_problem(problem)
    report = run_experiment(problem, "sis", reps, base_seed,
                            {"sis": {"n": n_per_level, "burn_in": 5}})
    good = np.array([r.p_hat for r in report.reps if r.error is None])
    mean = float(np.mean(good))
    se = float(np.std(good) / math.sqrt(good.size)) if good.size > 1 else math.inf
    deviation = abs(mean - problem.p_ref)
    return {
        "problem": problem.name,
        "p_ref": problem.p_ref,
        "oracle_mean": mean,
        "oracle_se": se,
        "n_runs": int(good.size),
        "deviation": deviation,
        "passed": bool(deviation <= 3.0 * se),
    }


# -- persistence -------------------------------------------------------------

_CSV_COLUMNS = ["rep", "p_hat", "lsf_calls", "n_levels", "converged"]


def emit_outputs(report: ExperimentReport, out_dir: str | Path,
                 plot: bool = False) -> dict[str, Path]:
    """Write per-repetition CSV, a schema-valid JSON summary and optionally
    an SVG scatter of the relative errors. Returns the written paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    stem = f"{report.problem}_{report.method}_{report.base_seed}"
    paths = {}

    csv_path = out / f"{stem}.csv"
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(_CSV_COLUMNS)
        for r in report.reps:
            if r.error is not None:
                continue
            writer.writerow([r.rep, repr(r.p_hat), r.lsf_calls, r.n_levels, r.converged])
    paths["csv"] = csv_path

    summary = report.to_summary()
    _validate_summary(summary)
    json_path = out / f"{stem}.json"
    json_path.write_text(json.dumps(summary, indent=2))
    paths["json"] = json_path

    if plot:
        paths["svg"] = _plot_relative_errors(report, out / f"{stem}.svg")
    return paths


def read_rep_csv(path: str | Path) -> list[RepRecord]:
    records = []
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            records.append(RepRecord(
                rep=int(row["rep"]),
                p_hat=float(row["p_hat"]),
                lsf_calls=int(row["lsf_calls"]),
                n_levels=int(row["n_levels"]),
                converged=row["converged"] == "True",
            ))
    return records


def summary_schema() -> dict:
    text = importlib.resources.files("sispce").joinpath(
        "schemas/summary.schema.json").read_text()
    return json.loads(text)


def _validate_summary(summary: dict) -> None:
    import jsonschema

    jsonschema.validate(summary, summary_schema())


def _plot_relative_errors(report: ExperimentReport, path: Path) -> Path:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise ImportError("SVG output needs matplotlib (install sispce[plot])") from exc

    errors = report.rel_errors
    fig, ax = plt.subplots(figsize=(4, 4))
    if errors:
        rng = np.random.default_rng(0)
        jitter = rng.uniform(-0.08, 0.08, size=len(errors))
        ax.scatter(jitter, errors, alpha=0.6, s=18)
    ax.axhline(1.0, color="k", lw=0.8, ls="--")
    ax.set_xlim(-0.5, 0.5)
    ax.set_xticks([])
    ax.set_yscale("log")
    ax.set_ylabel("relative error p_hat / p_ref")
    ax.set_title(f"{report.problem} ({report.method})")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
