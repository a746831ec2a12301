"""Normalized probabilist's Hermite polynomials and hyperbolic-truncation index sets.

The univariate basis is psi_n(x) = He_n(x)/sqrt(n!), orthonormal with respect
to the standard-normal weight. Evaluation uses the normalized three-term
recurrence

    psi_{n+1}(x) = (x psi_n(x) - sqrt(n) psi_{n-1}(x)) / sqrt(n+1),

which avoids factorial overflow at the polynomial degrees used here.
Multivariate basis functions are tensor products indexed by multi-indices;
index sets are truncated by an l_q quasi-norm rule and ordered
graded-lexicographically so coefficient vectors are comparable across fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "IndexSet",
    "hermite_eval",
    "hermite_design",
    "hermite_derivative",
    "tensor_eval",
    "generate_index_set",
    "basis_cardinality",
]

# tolerance for multi-indices sitting exactly on the l_q truncation boundary
_LQ_TIE_TOL = 1e-12


def hermite_design(x: np.ndarray, order: int) -> np.ndarray:
    """Evaluate psi_0..psi_order at each point, returning shape (len(x), order + 1)."""
    if order < 0:
        raise ValueError("order must be >= 0")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty((x.shape[0], order + 1))
    out[:, 0] = 1.0
    if order >= 1:
        out[:, 1] = x
    for n in range(1, order):
        out[:, n + 1] = (x * out[:, n] - math.sqrt(n) * out[:, n - 1]) / math.sqrt(n + 1)
    return out


def _design_all_dims(z: np.ndarray, order: int) -> np.ndarray:
    """psi_0..psi_order for every column of z in one recurrence: (n, order+1, m)."""
    n, m = z.shape
    out = np.empty((n, order + 1, m))
    out[:, 0, :] = 1.0
    if order >= 1:
        out[:, 1, :] = z
    for k in range(1, order):
        out[:, k + 1, :] = (z * out[:, k, :] - math.sqrt(k) * out[:, k - 1, :]) / math.sqrt(k + 1)
    return out


def hermite_eval(n: int, x):
    """Normalized probabilist's Hermite polynomial psi_n(x) = He_n(x)/sqrt(n!)."""
    if n < 0:
        raise ValueError("order must be >= 0")
    scalar = np.isscalar(x) or np.asarray(x).ndim == 0
    vals = hermite_design(x, n)[:, n]
    return float(vals[0]) if scalar else vals


def hermite_derivative(n: int, x):
    """d psi_n / dx = sqrt(n) psi_{n-1}; zero for n = 0."""
    if n < 0:
        raise ValueError("order must be >= 0")
    if n == 0:
        scalar = np.isscalar(x) or np.asarray(x).ndim == 0
        return 0.0 if scalar else np.zeros(np.asarray(x, dtype=float).shape)
    d = hermite_eval(n - 1, x)
    return math.sqrt(n) * d


def tensor_eval(k, z) -> float:
    """Tensor-product basis function Psi_k(z) = prod_j psi_{k_j}(z_j)."""
    k = np.asarray(k, dtype=int)
    z = np.asarray(z, dtype=float)
    if k.shape != z.shape:
        raise ValueError(f"index of length {k.shape} does not match point of length {z.shape}")
    out = 1.0
    for kj, zj in zip(k, z):
        out *= hermite_eval(int(kj), float(zj))
    return out


@dataclass(frozen=True)
class IndexSet:
    """Graded-lexicographically ordered multi-index set under l_q truncation."""

    indices: np.ndarray  # (P, m) nonnegative ints, zero index first
    m: int
    max_total_degree: int
    q_norm: float

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __iter__(self):
        return (tuple(row) for row in self.indices)

    @property
    def max_order(self) -> int:
        return int(self.indices.max(initial=0))

    def design_matrix(self, z: np.ndarray) -> np.ndarray:
        """Evaluate all basis functions at latent points z (n, m) -> (n, P)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape[1] != self.m:
            raise ValueError(f"expected latent dimension {self.m}, got {z.shape[1]}")
        per_dim = _design_all_dims(z, self.max_order)
        psi = per_dim[:, self.indices[:, 0], 0]
        for j in range(1, self.m):
            psi = psi * per_dim[:, self.indices[:, j], j]
        return psi

    def derivative_matrix(self, z: np.ndarray, j: int) -> np.ndarray:
        """d Psi_k / d z_j at latent points z (n, m) -> (n, P)."""
        z = np.atleast_2d(np.asarray(z, dtype=float))
        per_dim = _design_all_dims(z, self.max_order)
        sqrt_k = np.sqrt(self.indices[:, j].astype(float))
        # sqrt(k_j) psi_{k_j - 1}; k_j = 0 terms vanish through sqrt_k
        shifted = np.maximum(self.indices[:, j] - 1, 0)
        out = per_dim[:, shifted, j] * sqrt_k
        for i in range(self.m):
            if i != j:
                out = out * per_dim[:, self.indices[:, i], i]
        return out

    def restricted(self, keep: np.ndarray) -> "IndexSet":
        """Subset of the indices (zero index retained first if present in keep)."""
        return IndexSet(self.indices[keep], self.m, self.max_total_degree, self.q_norm)


def _lq_measure(k: np.ndarray, q: float) -> float:
    nz = k[k > 0].astype(float)
    if nz.size == 0:
        return 0.0
    return float(np.sum(nz ** q) ** (1.0 / q))


def generate_index_set(m: int, max_total_degree: int, q_norm: float = 1.0) -> IndexSet:
    """All multi-indices with (sum_i k_i^q)^(1/q) <= max_total_degree.

    Candidates are enumerated from the total-degree simplex (a superset of the
    l_q ball for q <= 1) and filtered; the result is ordered by total degree,
    then lexicographically with the leading dimensions first.
    """
    if m < 1:
        raise ValueError("latent dimension must be >= 1")
    if max_total_degree < 0:
        raise ValueError("max_total_degree must be >= 0")
    if not 0.0 < q_norm <= 1.0:
        raise ValueError("q_norm must lie in (0, 1]")

    accepted: list[tuple[int, ...]] = []

    def extend(prefix: list[int], remaining: int, dims_left: int) -> None:
        if dims_left == 0:
            k = np.array(prefix)
            if _lq_measure(k, q_norm) <= max_total_degree + _LQ_TIE_TOL:
                accepted.append(tuple(prefix))
            return
        for v in range(remaining + 1):
            extend(prefix + [v], remaining - v, dims_left - 1)

    extend([], max_total_degree, m)
    accepted.sort(key=lambda k: (sum(k), tuple(-v for v in k)))
    return IndexSet(np.array(accepted, dtype=int).reshape(len(accepted), m),
                    m, max_total_degree, q_norm)


def basis_cardinality(d: int, degree: int) -> int:
    """Total-degree basis size C(d + degree, degree), exact."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if degree < 0:
        raise ValueError("degree must be >= 0")
    return math.comb(d + degree, degree)
