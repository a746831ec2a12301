"""Least-squares machinery used by the PCE fits: OLS with closed-form
leave-one-out error, the error-variance estimator, and a hybrid
least-angle-regression model selector (LARS for the inclusion order, OLS
re-fit on each active set, leave-one-out error for picking the step).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.exceptions import ConvergenceWarning
from sklearn.linear_model import lars_path as _sk_lars_path

__all__ = ["FitDiagnostics", "LarsStep", "LarsResult", "ols_fit", "residual_variance", "lars_path"]

# singular values below cutoff * s_max are treated as zero (rank-deficient fit)
_SV_CUTOFF = 1e-10
# 1 - h_ii below this is an interpolating point; its LOO residual is clipped
_HAT_TOL = 1e-12


@dataclass
class FitDiagnostics:
    coefficients: np.ndarray
    loo_error: float          # mean squared LOO residual relative to Var[y]
    loo_corrected: float      # loo_error times the small-sample penalty factor
    residual_variance: float  # sum r^2 / dof, NaN when dof < 1
    dof: int
    rank: int
    rank_deficient: bool = False
    residuals: np.ndarray = field(default=None, repr=False)


def ols_fit(a: np.ndarray, y: np.ndarray) -> FitDiagnostics:
    """Least squares with hat-matrix leave-one-out error.

    Solves min ||y - a b|| through the SVD; singular values below
    1e-10 * s_max are truncated and the fit flagged rank-deficient. The
    relative LOO error follows the closed-form identity r_i / (1 - h_ii),
    normalized by the sample variance of y.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = a.shape
    if n != y.shape[0]:
        raise ValueError(f"design has {n} rows but response has {y.shape[0]}")
    if p > n:
        raise ValueError(
            f"more columns ({p}) than rows ({n}); shrink the basis before fitting"
        )

    u, s, vt = np.linalg.svd(a, full_matrices=False)
    keep = s > _SV_CUTOFF * s[0] if s.size else np.zeros(0, dtype=bool)
    rank = int(np.count_nonzero(keep))
    coeff = vt[keep].T @ ((u[:, keep].T @ y) / s[keep])
    resid = y - a @ coeff

    # hat diagonal from the retained left singular vectors
    h = np.einsum("ij,ij->i", u[:, keep], u[:, keep])
    denom = np.maximum(1.0 - h, _HAT_TOL)
    loo_resid = resid / denom
    var_y = float(np.var(y, ddof=1)) if n > 1 else 0.0
    mse_loo = float(np.mean(loo_resid**2))
    if var_y > 0:
        loo = mse_loo / var_y
    else:
        loo = 0.0 if mse_loo < 1e-24 else np.inf

    dof = n - rank
    # small-sample penalty (Chapelle/Blatman-style): inflates the LOO error
    # of models whose size approaches the number of points, which keeps model
    # selection from chasing near-interpolating fits
    if dof >= 1:
        trace_inv = float(np.sum(1.0 / s[keep] ** 2))
        penalty = (n / dof) * (1.0 + trace_inv)
    else:
        penalty = np.inf
    rvar = float(resid @ resid / dof) if dof >= 1 else float("nan")
    corrected = loo if loo == 0.0 or not np.isfinite(loo) else loo * penalty
    return FitDiagnostics(
        coefficients=coeff,
        loo_error=loo,
        loo_corrected=corrected,
        residual_variance=rvar,
        dof=dof,
        rank=rank,
        rank_deficient=rank < min(n, p),
        residuals=resid,
    )


def residual_variance(residuals: np.ndarray, n_e: int, n_params: int) -> float:
    """Error-variance estimate sum r^2 / (n_e - n_params).

    n_params is the total parameter count of the surrogate (subspace entries
    plus expansion coefficients). Raises when the design leaves no residual
    degrees of freedom.
    """
    residuals = np.asarray(residuals, dtype=float).reshape(-1)
    if n_e <= n_params:
        raise ValueError(
            f"insufficient DoE for variance estimate: n_e={n_e} <= parameters={n_params}"
        )
    return float(residuals @ residuals) / (n_e - n_params)


@dataclass
class LarsStep:
    active: np.ndarray  # column indices of the design, intercept included
    diagnostics: FitDiagnostics


@dataclass
class LarsResult:
    steps: list[LarsStep]
    best: int

    @property
    def active(self) -> np.ndarray:
        return self.steps[self.best].active

    @property
    def diagnostics(self) -> FitDiagnostics:
        return self.steps[self.best].diagnostics

    def full_coefficients(self, p: int) -> np.ndarray:
        """Selected coefficients scattered into a length-p vector."""
        out = np.zeros(p)
        out[self.active] = self.diagnostics.coefficients
        return out


def lars_path(a: np.ndarray, y: np.ndarray, intercept_col: int = 0,
              max_steps: int | None = None, patience: int = 15) -> LarsResult:
    """Hybrid LARS-OLS model selection.

    Columns other than intercept_col are centered and scaled to unit norm,
    the LARS inclusion order is computed on the standardized problem, and
    each step's active set is re-fit by plain OLS on the original columns
    (intercept always active). The returned model is the step with the
    smallest relative leave-one-out error; the search stops early once the
    error has not improved for `patience` consecutive steps.
    """
    a = np.asarray(a, dtype=float)
    y = np.asarray(y, dtype=float).reshape(-1)
    n, p = a.shape

    cols = np.arange(p) != intercept_col
    x = a[:, cols] - a[:, cols].mean(axis=0)
    norms = np.linalg.norm(x, axis=0)
    usable = norms > 1e-12 * max(1.0, np.max(norms, initial=0.0))
    yc = y - y.mean()

    steps = [LarsStep(np.array([intercept_col]), ols_fit(a[:, [intercept_col]], y))]
    if np.linalg.norm(yc) > 1e-14 * max(1.0, np.linalg.norm(y)) and np.any(usable):
        x = x[:, usable] / norms[usable]
        candidate_ids = np.flatnonzero(cols)[usable]
        limit = min(n - 2, x.shape[1])
        if max_steps is not None:
            limit = min(limit, max_steps)
        if limit > 0:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ConvergenceWarning)
                _, order, _ = _sk_lars_path(x, yc, method="lar", max_iter=limit)
            best_seen = steps[0].diagnostics.loo_corrected
            stale = 0
            for k in range(1, len(order) + 1):
                active = np.concatenate(([intercept_col], candidate_ids[order[:k]]))
                if active.size > n:
                    break
                diag = ols_fit(a[:, active], y)
                steps.append(LarsStep(active, diag))
                if diag.loo_corrected < best_seen - 1e-16:
                    best_seen = diag.loo_corrected
                    stale = 0
                else:
                    stale += 1
                    if stale >= patience:
                        break

    best = int(np.argmin([s.diagnostics.loo_corrected for s in steps]))
    return LarsResult(steps=steps, best=best)
