"""Dimension-reducing PCE surrogates driven by nonlinear partial least squares.

The fit extracts latent directions one at a time: each weight vector starts
from the covariance direction E^T F, is refined by a Newton-Raphson loop that
alternates a univariate PCE fit along the current score with a Gauss-Newton
weight update, and the univariate order is selected by leave-one-out error.
After deflation the procedure repeats until the residual-response norm
stabilizes or the direction budget is exhausted.

Two model flavors are assembled from the extracted components:

* R: a sum of univariate PCEs along the recursively corrected directions r_j.
* W: a sparse multivariate Hermite expansion (selected by hybrid LARS-OLS)
  on the weight-subspace coordinates z = W^T (u - mu).

The W flavor is the one used by the samplers; R is kept for diagnostics and
cross-checks.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .hermite import IndexSet, generate_index_set, hermite_design
from .regression import lars_path, ols_fit

__all__ = ["PlsConfig", "LatentComponent", "PlsPceModel", "fit", "r_directions"]


@dataclass(frozen=True)
class PlsConfig:
    max_total_degree: int = 7
    q_norm: float = 0.75
    m_max: int = 10
    eps_w: float = 1e-3
    eps_y: float = 1e-3
    newton_max_iter: int = 50

    def __post_init__(self):
        if self.max_total_degree < 1:
            raise ValueError("max_total_degree must be >= 1")
        if not 0 < self.q_norm <= 1:
            raise ValueError("q_norm must lie in (0, 1]")
        if self.m_max < 1:
            raise ValueError("m_max must be >= 1")


@dataclass
class LatentComponent:
    weight: np.ndarray       # unit vector in input space
    load: np.ndarray         # deflation load
    order: int               # selected univariate order
    coeffs: np.ndarray       # univariate PCE coefficients, constant included
    loo_error: float


@lru_cache(maxsize=64)
def _cached_index_set(m: int, degree: int, q_norm: float) -> IndexSet:
    return generate_index_set(m, degree, q_norm)


@dataclass
class PlsPceModel:
    variant: str                     # "W" or "R"
    projection: np.ndarray           # (d, m) columns W or R
    mu_u: np.ndarray                 # (d,) DoE column means
    a0: float                        # DoE response mean
    components: list[LatentComponent]
    index_set: IndexSet | None       # W variant, zero index first
    coefficients: np.ndarray | None  # aligned with index_set
    residual_var: float
    n_doe: int
    variance_fallback: bool = False
    orthogonality_gap: float = 0.0   # max |W^T W - I| (monitored, not enforced)
    degree_cap: int = 0              # effective candidate-order cap used in the fit

    @property
    def dimension(self) -> int:
        return self.projection.shape[0]

    @property
    def n_directions(self) -> int:
        return self.projection.shape[1]

    @property
    def n_coefficients(self) -> int:
        if self.variant == "W":
            return 0 if self.coefficients is None else len(self.coefficients)
        return sum(c.coeffs.size for c in self.components)

    @property
    def n_parameters(self) -> int:
        """Subspace entries plus expansion coefficients (a0 excluded)."""
        return self.n_directions * self.dimension + self.n_coefficients

    def latent_coords(self, u: np.ndarray) -> np.ndarray:
        """z = projection^T (u - mu_u); accepts (d,) or (n, d)."""
        u = np.asarray(u, dtype=float)
        squeeze = u.ndim == 1
        z = (np.atleast_2d(u) - self.mu_u) @ self.projection
        return z[0] if squeeze else z

    def predict(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        squeeze = u.ndim == 1
        pts = np.atleast_2d(u)
        if self.n_directions == 0:
            out = np.full(pts.shape[0], self.a0)
            return float(out[0]) if squeeze else out
        z = (pts - self.mu_u) @ self.projection
        if self.variant == "W":
            out = self.a0 + self.index_set.design_matrix(z) @ self.coefficients
        else:
            out = np.full(pts.shape[0], self.a0)
            for j, comp in enumerate(self.components):
                out += hermite_design(z[:, j], comp.order) @ comp.coeffs
        return float(out[0]) if squeeze else out

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.predict(u)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "projection": self.projection.tolist(),
            "mu_u": self.mu_u.tolist(),
            "a0": self.a0,
            "components": [
                {
                    "weight": c.weight.tolist(),
                    "load": c.load.tolist(),
                    "order": c.order,
                    "coeffs": c.coeffs.tolist(),
                    "loo_error": c.loo_error,
                }
                for c in self.components
            ],
            "index_set": None if self.index_set is None else {
                "indices": self.index_set.indices.tolist(),
                "m": self.index_set.m,
                "max_total_degree": self.index_set.max_total_degree,
                "q_norm": self.index_set.q_norm,
            },
            "coefficients": None if self.coefficients is None else self.coefficients.tolist(),
            "residual_var": self.residual_var,
            "n_doe": self.n_doe,
            "variance_fallback": self.variance_fallback,
            "orthogonality_gap": self.orthogonality_gap,
            "degree_cap": self.degree_cap,
        }

    @staticmethod
    def from_dict(data: dict) -> "PlsPceModel":
        iset = None
        if data["index_set"] is not None:
            raw = data["index_set"]
            iset = IndexSet(
                np.array(raw["indices"], dtype=int).reshape(-1, raw["m"]),
                raw["m"], raw["max_total_degree"], raw["q_norm"],
            )
        comps = [
            LatentComponent(
                weight=np.array(c["weight"]),
                load=np.array(c["load"]),
                order=int(c["order"]),
                coeffs=np.array(c["coeffs"]),
                loo_error=float(c["loo_error"]),
            )
            for c in data["components"]
        ]
        d = len(data["mu_u"])
        return PlsPceModel(
            variant=data["variant"],
            projection=np.array(data["projection"]).reshape(d, -1),
            mu_u=np.array(data["mu_u"]),
            a0=float(data["a0"]),
            components=comps,
            index_set=iset,
            coefficients=None if data["coefficients"] is None else np.array(data["coefficients"]),
            residual_var=float(data["residual_var"]),
            n_doe=int(data["n_doe"]),
            variance_fallback=bool(data["variance_fallback"]),
            orthogonality_gap=float(data["orthogonality_gap"]),
            degree_cap=int(data.get("degree_cap", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @staticmethod
    def from_json(text: str) -> "PlsPceModel":
        return PlsPceModel.from_dict(json.loads(text))


def r_directions(weights: list[np.ndarray], loads: list[np.ndarray]) -> np.ndarray:
    """Direction matrix from weights/loads: r_1 = w_1, r_j = w_j - r_{j-1} (p_{j-1}^T w_j)."""
    if len(weights) != len(loads):
        raise ValueError("need equally many weights and loads")
    cols = []
    for j, w in enumerate(weights):
        if j == 0:
            cols.append(np.asarray(w, dtype=float))
        else:
            cols.append(w - cols[j - 1] * float(loads[j - 1] @ w))
    return np.column_stack(cols)


def _univariate_slope(design: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    """d/dt of a univariate PCE given its design psi_0..psi_q at the scores."""
    q = design.shape[1] - 1
    s = np.zeros(design.shape[0])
    for k in range(1, q + 1):
        s += coeffs[k] * math.sqrt(k) * design[:, k - 1]
    return s


def _extract_component(e: np.ndarray, f: np.ndarray, orders: range,
                       cfg: PlsConfig) -> LatentComponent | None:
    """One PLS component: Newton-refined weight and LOO-selected order."""
    c = e.T @ f
    c_norm = np.linalg.norm(c)
    if c_norm <= 1e-12 * max(1.0, np.linalg.norm(e) * np.linalg.norm(f)):
        return None
    w0 = c / c_norm

    best: LatentComponent | None = None
    for q in orders:
        w = w0.copy()
        prev_step = np.inf
        grew = 0
        for _ in range(cfg.newton_max_iter):
            t = e @ w
            design = hermite_design(t, q)
            diag = ols_fit(design, f)
            resid = diag.residuals
            slope = _univariate_slope(design, diag.coefficients)
            jac = slope[:, None] * e
            dw, *_ = np.linalg.lstsq(jac, resid, rcond=None)
            step = np.linalg.norm(dw)
            if not np.isfinite(step):
                w = w0.copy()
                break
            grew = grew + 1 if step > prev_step else 0
            if grew >= 3:
                # diverging: fall back to the covariance direction for this order
                w = w0.copy()
                break
            prev_step = step
            w = w + dw
            w /= np.linalg.norm(w)
            if step < cfg.eps_w:
                break
        t = e @ w
        diag = ols_fit(hermite_design(t, q), f)
        if best is None or diag.loo_corrected < best_score:
            best_score = diag.loo_corrected
            best = LatentComponent(
                weight=w, load=np.zeros_like(w), order=q,
                coeffs=diag.coefficients, loo_error=diag.loo_error,
            )
    return best


def fit(u_doe: np.ndarray, y_doe: np.ndarray, config: PlsConfig | None = None,
        variant: str = "W") -> PlsPceModel:
    """Fit a PLS-PCE model of the requested flavor to the DoE.

    The candidate univariate orders run 1..max_total_degree, capped at
    n_doe - 2 so every candidate fit keeps at least one residual degree of
    freedom. Extraction stops when the residual response is explained, when
    it decorrelates from the deflated inputs, when its norm stabilizes
    (relative change < eps_y), or at m_max directions.
    """
    cfg = config or PlsConfig()
    if variant not in ("W", "R"):
        raise ValueError(f"variant must be 'W' or 'R', got {variant!r}")
    u_doe = np.asarray(u_doe, dtype=float)
    y = np.asarray(y_doe, dtype=float).reshape(-1)
    n, d = u_doe.shape
    if n != y.shape[0]:
        raise ValueError("DoE inputs and responses disagree in length")
    if n < 3:
        raise ValueError("need at least 3 DoE points")

    mu_u = u_doe.mean(axis=0)
    a0 = float(y.mean())
    e = u_doe - mu_u
    f = y - a0
    y_scale = max(np.linalg.norm(f), 1e-30)
    degree_cap = min(cfg.max_total_degree, n - 2)
    orders = range(1, degree_cap + 1)

    components: list[LatentComponent] = []
    f_norm = np.linalg.norm(f)
    while len(components) < cfg.m_max:
        # residual below eps_y of the original response scale: explained;
        # further directions would only chase fit noise
        if f_norm <= cfg.eps_y * y_scale:
            break
        comp = _extract_component(e, f, orders, cfg)
        if comp is None:
            break
        # cross-validation stop: a component whose best univariate fit does
        # no better than the residual mean carries no signal
        if comp.loo_error >= 1.0:
            break
        t = e @ comp.weight
        tt = float(t @ t)
        if tt <= 0:
            break
        comp.load = e.T @ t / tt
        components.append(comp)
        e = e - np.outer(t, comp.load)
        f = f - hermite_design(t, comp.order) @ comp.coeffs
        f_norm_new = np.linalg.norm(f)
        if abs(f_norm_new - f_norm) / f_norm < cfg.eps_y:
            f_norm = f_norm_new
            break
        f_norm = f_norm_new

    m = len(components)
    if m == 0:
        return PlsPceModel(
            variant=variant, projection=np.zeros((d, 0)), mu_u=mu_u, a0=a0,
            components=[], index_set=None, coefficients=None,
            residual_var=_residual_variance_with_fallback(f, n, 0, 0)[0],
            n_doe=n, degree_cap=degree_cap,
        )

    w_mat = np.column_stack([c.weight for c in components])
    gap = float(np.max(np.abs(w_mat.T @ w_mat - np.eye(m))))

    if variant == "R":
        proj = r_directions([c.weight for c in components], [c.load for c in components])
        model = PlsPceModel(
            variant="R", projection=proj, mu_u=mu_u, a0=a0, components=components,
            index_set=None, coefficients=None, residual_var=0.0, n_doe=n,
            orthogonality_gap=gap, degree_cap=degree_cap,
        )
    else:
        z = (u_doe - mu_u) @ w_mat
        full_set = _cached_index_set(m, degree_cap, cfg.q_norm)
        design = full_set.design_matrix(z)
        sel = lars_path(design, y - a0, intercept_col=0)
        coeffs_full = sel.full_coefficients(len(full_set))
        keep = np.zeros(len(full_set), dtype=bool)
        keep[0] = True
        keep[sel.active] = True
        model = PlsPceModel(
            variant="W", projection=w_mat, mu_u=mu_u, a0=a0, components=components,
            index_set=full_set.restricted(keep), coefficients=coeffs_full[keep],
            residual_var=0.0, n_doe=n, orthogonality_gap=gap, degree_cap=degree_cap,
        )

    resid = y - model.predict(u_doe)
    model.residual_var, model.variance_fallback = _residual_variance_with_fallback(
        resid, n, m * d, model.n_coefficients
    )
    return model


def _residual_variance_with_fallback(resid: np.ndarray, n: int, md: int,
                                     p: int) -> tuple[float, bool]:
    """Error variance with divisor n - md - p, or max(1, n - p) on tiny DoEs."""
    ss = float(resid @ resid)
    if n > md + p:
        return ss / (n - md - p), False
    return ss / max(1, n - p), True


def fit_w(u_doe: np.ndarray, y_doe: np.ndarray, config: PlsConfig | None = None) -> PlsPceModel:
    return fit(u_doe, y_doe, config, variant="W")
