"""Input probability model, standard-normal transform and counted limit-state evaluator.

All sampling methods in this package operate in independent standard-normal
space. Physical input models are declared as a list of independent marginals;
the componentwise isoprobabilistic transform maps between the two spaces.
Transforms use complementary-branch arithmetic so that CDF values never
saturate prematurely; where double precision does run out (|u| beyond roughly
8.5) the transform clamps instead of producing infinities, since the samplers
routinely push points deep into the tails.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

__all__ = [
    "Marginal",
    "InputModel",
    "LimitStateHandle",
    "McEstimate",
    "SupportError",
    "mc_estimate",
]

# Saturation bound for the standard-normal coordinate: beyond this point the
# physical-space CDF arithmetic underflows/saturates in double precision.
U_SAT = 8.5

# Euler-Mascheroni constant, used by the Gumbel moment parameterization.
_EULER_GAMMA = 0.5772156649015329


class SupportError(ValueError):
    """A physical-space point lies outside the support of a marginal."""


@dataclass(frozen=True)
class Marginal:
    """One independent marginal distribution, moment-parameterized.

    kind is one of 'standard_normal', 'normal', 'lognormal', 'gumbel',
    'uniform'. For normal/lognormal/gumbel the parameters are the mean and
    standard deviation of the physical variable; for uniform they are the
    bounds.
    """

    kind: str
    a: float = 0.0
    b: float = 1.0

    @staticmethod
    def standard_normal() -> "Marginal":
        return Marginal("standard_normal")

    @staticmethod
    def normal(mean: float, std: float) -> "Marginal":
        if std <= 0:
            raise ValueError(f"normal marginal needs std > 0, got {std}")
        return Marginal("normal", mean, std)

    @staticmethod
    def lognormal(mean: float, std: float) -> "Marginal":
        if mean <= 0:
            raise ValueError(f"lognormal marginal needs mean > 0, got {mean}")
        if std <= 0:
            raise ValueError(f"lognormal marginal needs std > 0, got {std}")
        return Marginal("lognormal", mean, std)

    @staticmethod
    def gumbel(mean: float, std: float) -> "Marginal":
        if std <= 0:
            raise ValueError(f"gumbel marginal needs std > 0, got {std}")
        return Marginal("gumbel", mean, std)

    @staticmethod
    def uniform(lower: float, upper: float) -> "Marginal":
        if not lower < upper:
            raise ValueError(f"uniform marginal needs lower < upper, got [{lower}, {upper}]")
        return Marginal("uniform", lower, upper)

    # -- derived parameters ------------------------------------------------

    def _lognormal_params(self) -> tuple[float, float]:
        # moment matching: mean/std of the physical variable -> log-scale params
        sig2 = math.log1p((self.b / self.a) ** 2)
        return math.log(self.a) - 0.5 * sig2, math.sqrt(sig2)

    def _gumbel_params(self) -> tuple[float, float]:
        # Gumbel (max) with given mean/std: scale from the variance, then shift
        scale = self.b * math.sqrt(6.0) / math.pi
        return self.a - _EULER_GAMMA * scale, scale

    def support(self) -> tuple[float, float]:
        if self.kind == "lognormal":
            return 0.0, math.inf
        if self.kind == "uniform":
            return self.a, self.b
        return -math.inf, math.inf

    def mean_std(self) -> tuple[float, float]:
        """Declared (mean, std) of the physical variable."""
        if self.kind == "standard_normal":
            return 0.0, 1.0
        if self.kind == "uniform":
            return 0.5 * (self.a + self.b), (self.b - self.a) / math.sqrt(12.0)
        return self.a, self.b

    # -- transforms ----------------------------------------------------------

    def to_u(self, x: np.ndarray) -> np.ndarray:
        """Map physical-space values to standard-normal space, u = Phi^-1(F(x))."""
        x = np.asarray(x, dtype=float)
        lo, hi = self.support()
        if np.any(x < lo) or np.any(x > hi):
            raise SupportError(
                f"value outside the support [{lo}, {hi}] of a {self.kind} marginal"
            )
        if self.kind == "standard_normal":
            return x.copy()
        if self.kind == "normal":
            return (x - self.a) / self.b
        if self.kind == "lognormal":
            mu, sig = self._lognormal_params()
            with np.errstate(divide="ignore"):
                u = (np.log(x) - mu) / sig
            return np.clip(u, -U_SAT, U_SAT)
        if self.kind == "gumbel":
            loc, scale = self._gumbel_params()
            t = np.exp(-(x - loc) / scale)  # F = exp(-t)
            # lower tail through the CDF, upper tail through the survival function
            u = np.where(
                t >= math.log(2.0),
                ndtri(np.exp(-t)),
                -ndtri(-np.expm1(-t)),
            )
            return np.clip(u, -U_SAT, U_SAT)
        if self.kind == "uniform":
            width = self.b - self.a
            u = np.where(
                x - self.a <= 0.5 * width,
                ndtri((x - self.a) / width),
                -ndtri((self.b - x) / width),
            )
            return np.clip(u, -U_SAT, U_SAT)
        raise ValueError(f"unknown marginal kind {self.kind!r}")

    def from_u(self, u: np.ndarray) -> np.ndarray:
        """Map standard-normal values back to physical space, x = F^-1(Phi(u))."""
        u = np.asarray(u, dtype=float)
        if self.kind == "standard_normal":
            return u.copy()
        if self.kind == "normal":
            return self.a + self.b * u
        if self.kind == "lognormal":
            mu, sig = self._lognormal_params()
            return np.exp(mu + sig * u)
        if self.kind == "gumbel":
            loc, scale = self._gumbel_params()
            # -ln F computed as -log_ndtr(u), accurate for all u
            return loc - scale * np.log(-log_ndtr(u))
        if self.kind == "uniform":
            # symmetric evaluation keeps x == upper - eps reachable from large u
            return np.where(
                u <= 0,
                self.a + (self.b - self.a) * ndtr(u),
                self.b - (self.b - self.a) * ndtr(-u),
            )
        raise ValueError(f"unknown marginal kind {self.kind!r}")


@dataclass(frozen=True)
class InputModel:
    """Ordered list of independent marginals; defines T and its inverse."""

    marginals: tuple[Marginal, ...]

    def __init__(self, marginals: Sequence[Marginal]):
        marginals = tuple(marginals)
        if len(marginals) < 1:
            raise ValueError("input model needs at least one marginal")
        object.__setattr__(self, "marginals", marginals)

    @property
    def dimension(self) -> int:
        return len(self.marginals)

    @staticmethod
    def all_standard_normal(d: int) -> "InputModel":
        return InputModel([Marginal.standard_normal()] * d)

    def to_standard_normal(self, x: np.ndarray) -> np.ndarray:
        """Componentwise u_i = Phi^-1(F_i(x_i)); accepts (d,) or (n, d)."""
        x_arr = np.asarray(x, dtype=float)
        squeeze = x_arr.ndim == 1
        x2 = np.atleast_2d(x_arr)
        self._check_dim(x2)
        u = np.empty_like(x2)
        for i, m in enumerate(self.marginals):
            try:
                u[:, i] = m.to_u(x2[:, i])
            except SupportError as exc:
                raise SupportError(f"coordinate {i}: {exc}") from None
        return u[0] if squeeze else u

    def from_standard_normal(self, u: np.ndarray) -> np.ndarray:
        """Componentwise x_i = F_i^-1(Phi(u_i)); accepts (d,) or (n, d)."""
        u_arr = np.asarray(u, dtype=float)
        squeeze = u_arr.ndim == 1
        u2 = np.atleast_2d(u_arr)
        self._check_dim(u2)
        x = np.empty_like(u2)
        for i, m in enumerate(self.marginals):
            x[:, i] = m.from_u(u2[:, i])
        return x[0] if squeeze else x

    def _check_dim(self, arr: np.ndarray) -> None:
        if arr.shape[-1] != self.dimension:
            raise ValueError(
                f"expected dimension {self.dimension}, got {arr.shape[-1]}"
            )


class LimitStateHandle:
    """Counted evaluator of a deterministic limit-state function in u-space.

    The callable receives an (n, d) array and must return n scalar g-values;
    a single point may be passed as a (d,) vector. The call counter increases
    by exactly the number of points evaluated and is safe to update from
    concurrent batch evaluations.
    """

    def __init__(self, evaluator: Callable[[np.ndarray], np.ndarray], dimension: int):
        self.evaluator = evaluator
        self.dimension = int(dimension)
        self._count = 0
        self._lock = threading.Lock()

    @property
    def call_count(self) -> int:
        return self._count

    def __call__(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        pts = np.atleast_2d(u)
        if pts.shape[1] != self.dimension:
            raise ValueError(f"expected dimension {self.dimension}, got {pts.shape[1]}")
        g = np.asarray(self.evaluator(pts), dtype=float).reshape(-1)
        if g.shape[0] != pts.shape[0]:
            raise ValueError("evaluator returned wrong number of values")
        with self._lock:
            self._count += pts.shape[0]
        return float(g[0]) if single else g


def transformed_handle(g_physical: Callable[[np.ndarray], np.ndarray],
                       model: InputModel) -> LimitStateHandle:
    """Wrap a physical-space LSF as a counted u-space evaluator G = g o T^-1."""

    def evaluator(u: np.ndarray) -> np.ndarray:
        return g_physical(model.from_standard_normal(u))

    return LimitStateHandle(evaluator, model.dimension)


class McEstimate(NamedTuple):
    p_hat: float
    cov: float  # NaN when no failures were observed
    failures: int


# Chunked evaluation keeps memory bounded for large n; the chunk schedule is
# fixed so results are reproducible for a given seed.
_MC_CHUNK = 1_000_000


def mc_estimate(lsf: LimitStateHandle, n: int, seed) -> McEstimate:
    """Crude Monte Carlo estimate of P(G <= 0) with its estimator CoV.

    Returns p_hat = (1/n) sum I[G(u_k) <= 0] over i.i.d. standard-normal
    points and the CoV sqrt((1 - p)/(n p)). A run without any observed
    failure yields p_hat = 0.0 and cov = NaN.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    failures = 0
    done = 0
    while done < n:
        m = min(_MC_CHUNK, n - done)
        g = lsf(rng.standard_normal((m, lsf.dimension)))
        failures += int(np.count_nonzero(g <= 0.0))
        done += m
    p_hat = failures / n
    cov = math.sqrt((1.0 - p_hat) / (n * p_hat)) if failures > 0 else math.nan
    return McEstimate(p_hat, cov, failures)
