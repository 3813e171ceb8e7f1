"""Gaussian-kernel maximum mean discrepancy and the invariance regularizer.

Two estimators of squared MMD between sample sets A and B:

* `mmd2_biased` - the V-statistic. Nonnegative, smooth, defined for a
  single sample per set; this is the training-loss form and is
  differentiable through the kernel with respect to the samples.
* `mmd2_unbiased` - the U-statistic. Unbiased (may be negative), used for
  diagnostics only; needs at least two samples per set.

`pcir_penalty` sums the biased estimator over all unordered pairs of
per-environment representation batches of normal-only data.  The sum runs
over unordered pairs (the symmetric ordered-pair sum is exactly twice
this, a factor absorbed into the regularization weight).

Bandwidths follow the median heuristic by default, recomputed per pair
from the current sample values and treated as a constant under
differentiation.  All functions accept numpy arrays (returning floats) or
autodiff tensors (returning scalar tensors).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel mixture: sum_i w_i * exp(-d^2 / (2 sigma_i^2)).

    mode "median": sigma_i = scales[i] * median pairwise distance of the
    pooled inputs.  mode "fixed": sigma_i = bandwidths[i].  Weights default
    to uniform.
    """

    mode: str = "median"
    bandwidths: tuple[float, ...] = ()
    scales: tuple[float, ...] = (1.0,)
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.mode not in ("median", "fixed"):
            raise ValueError(f"unknown bandwidth mode {self.mode!r}")
        if self.mode == "fixed":
            if not self.bandwidths:
                raise ValueError("fixed mode needs at least one bandwidth")
            if any(s <= 0 for s in self.bandwidths):
                raise ValueError("bandwidths must be positive")
        elif any(s <= 0 for s in self.scales):
            raise ValueError("scales must be positive")
        n = len(self.bandwidths) if self.mode == "fixed" else len(self.scales)
        if self.weights is not None and len(self.weights) != n:
            raise ValueError("weights length must match the number of kernels")

    def resolve(self, a: np.ndarray, b: np.ndarray) -> list[tuple[float, float]]:
        """Concrete (sigma, weight) pairs for one two-sample computation."""
        if self.mode == "fixed":
            sigmas = list(self.bandwidths)
        else:
            med = median_heuristic(a, b)
            sigmas = [s * med for s in self.scales]
        if self.weights is None:
            w = 1.0 / len(sigmas)
            return [(s, w) for s in sigmas]
        return list(zip(sigmas, self.weights))


@dataclass
class EnvBatch:
    """Representations of one environment's samples (rows), normal-only."""

    env: str
    z: Tensor | np.ndarray
    w: int = 0

    @property
    def values(self) -> np.ndarray:
        return self.z.data if isinstance(self.z, Tensor) else np.asarray(self.z, dtype=np.float64)


def rbf_kernel(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """Gaussian kernel exp(-||x-y||^2 / (2 sigma^2)) between two vectors."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise ShapeError(f"rbf_kernel: dimensions {x.shape} vs {y.shape}")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d2 = float(np.sum((x - y) ** 2))
    return float(np.exp(-d2 / (2.0 * sigma * sigma)))


def _as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] == 0:
        raise ShapeError(f"expected a non-empty sample matrix, got shape {m.shape}")
    return m


def median_heuristic(a, b) -> float:
    """Median Euclidean distance over all unordered pairs of A union B.

    Falls back to the smallest nonzero distance when the median is zero,
    and to 1.0 when every point coincides.
    """
    a = _as_matrix(a.data if isinstance(a, Tensor) else a)
    b = _as_matrix(b.data if isinstance(b, Tensor) else b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    pool = np.concatenate([a, b], axis=0)
    n = pool.shape[0]
    if n < 2:
        raise ValueError("median heuristic needs at least two points")
    sq = np.sum(pool ** 2, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * pool @ pool.T
    iu = np.triu_indices(n, k=1)
    dists = np.sqrt(np.maximum(d2[iu], 0.0))
    med = float(np.median(dists))
    if med > 0.0:
        return med
    nonzero = dists[dists > 0.0]
    return float(nonzero.min()) if nonzero.size else 1.0


# -- kernel-matrix means ----------------------------------------------------

def _sq_dists_np(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    sa = np.sum(a ** 2, axis=1)
    sb = np.sum(b ** 2, axis=1)
    return sa[:, None] + sb[None, :] - 2.0 * a @ b.T


def _mean_kernel_np(a: np.ndarray, b: np.ndarray, sigmas: list[tuple[float, float]]) -> float:
    d2 = _sq_dists_np(a, b)
    total = 0.0
    for sigma, w in sigmas:
        total += w * float(np.mean(np.exp(-d2 / (2.0 * sigma * sigma))))
    return total


def _sq_dists_t(a: Tensor, b: Tensor) -> Tensor:
    sa = ad.tsum(ad.square(a), axis=1, keepdims=True)      # (m, 1)
    sb = ad.tsum(ad.square(b), axis=1)                     # (n,)
    cross = ad.matmul(a, ad.transpose(b))                  # (m, n)
    return ad.sub(ad.add(sa, sb), ad.scale(cross, 2.0))


def _mean_kernel_t(a: Tensor, b: Tensor, sigmas: list[tuple[float, float]]) -> Tensor:
    d2 = _sq_dists_t(a, b)
    parts = [ad.scale(ad.tmean(ad.exp(ad.scale(d2, -1.0 / (2.0 * s * s)))), w)
             for s, w in sigmas]
    out = parts[0]
    for p in parts[1:]:
        out = ad.add(out, p)
    return out


def _prepare_pair(a, b) -> tuple[bool, object, object]:
    """Normalize the two sample sets, preserving tensor-ness for autodiff."""
    traced = isinstance(a, Tensor) or isinstance(b, Tensor)
    if traced:
        ta = a if isinstance(a, Tensor) else Tensor(_as_matrix(a))
        tb = b if isinstance(b, Tensor) else Tensor(_as_matrix(b))
        if ta.data.ndim != 2 or tb.data.ndim != 2:
            raise ShapeError("tensor sample sets must be 2-D (rows = samples)")
        if ta.shape[0] == 0 or tb.shape[0] == 0:
            raise ShapeError("empty sample set")
        if ta.shape[1] != tb.shape[1]:
            raise ShapeError(f"dimension mismatch: {ta.shape[1]} vs {tb.shape[1]}")
        return True, ta, tb
    ma, mb = _as_matrix(a), _as_matrix(b)
    if ma.shape[1] != mb.shape[1]:
        raise ShapeError(f"dimension mismatch: {ma.shape[1]} vs {mb.shape[1]}")
    return False, ma, mb


def mmd2_biased(a, b, kernel: KernelConfig | None = None):
    """Squared MMD, V-statistic form: nonnegative and defined for m, n >= 1.

    Differentiable with respect to tensor inputs; the median-heuristic
    bandwidth is computed from current values and held constant.
    """
    kernel = kernel or KernelConfig()
    traced, a, b = _prepare_pair(a, b)
    if traced:
        sigmas = kernel.resolve(a.data, b.data)
        kaa = _mean_kernel_t(a, a, sigmas)
        kbb = _mean_kernel_t(b, b, sigmas)
        kab = _mean_kernel_t(a, b, sigmas)
        return ad.sub(ad.add(kaa, kbb), ad.scale(kab, 2.0))
    sigmas = kernel.resolve(a, b)
    value = (_mean_kernel_np(a, a, sigmas) + _mean_kernel_np(b, b, sigmas)
             - 2.0 * _mean_kernel_np(a, b, sigmas))
    return max(value, 0.0)


def mmd2_unbiased(a, b, kernel: KernelConfig | None = None) -> float:
    """Squared MMD, U-statistic form: unbiased, may be negative, m, n >= 2."""
    kernel = kernel or KernelConfig()
    a = _as_matrix(a.data if isinstance(a, Tensor) else a)
    b = _as_matrix(b.data if isinstance(b, Tensor) else b)
    if a.shape[1] != b.shape[1]:
        raise ShapeError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    m, n = a.shape[0], b.shape[0]
    if m < 2 or n < 2:
        raise ValueError("the unbiased estimator needs at least 2 samples per set")
    sigmas = kernel.resolve(a, b)
    daa = _sq_dists_np(a, a)
    dbb = _sq_dists_np(b, b)
    dab = _sq_dists_np(a, b)
    total = 0.0
    for sigma, w in sigmas:
        c = -1.0 / (2.0 * sigma * sigma)
        kaa = np.exp(c * daa)
        kbb = np.exp(c * dbb)
        kab = np.exp(c * dab)
        term_a = (kaa.sum() - np.trace(kaa)) / (m * (m - 1))
        term_b = (kbb.sum() - np.trace(kbb)) / (n * (n - 1))
        total += w * (term_a + term_b - 2.0 * kab.mean())
    return float(total)


def pcir_penalty(batches: list[EnvBatch], kernel: KernelConfig | None = None):
    """Sum of biased squared MMD over unordered environment pairs.

    Every batch must carry normal data (w == 0) and the same representation
    dimension.  Pairs are visited in sorted environment order so the
    floating-point sum is reproducible.  Returns 0.0 for fewer than two
    environments.  Differentiable with respect to tensor batches.
    """
    kernel = kernel or KernelConfig()
    for batch in batches:
        if batch.w != 0:
            raise ValueError(f"environment {batch.env!r}: regularizer batches must have w=0")
    dims = {batch.values.shape[1] if batch.values.ndim == 2 else 1 for batch in batches}
    if len(dims) > 1:
        raise ShapeError(f"mixed representation dimensions: {sorted(dims)}")
    ordered = sorted(batches, key=lambda batch: batch.env)
    traced = any(isinstance(batch.z, Tensor) for batch in ordered)
    if len(ordered) < 2:
        return Tensor(0.0) if traced else 0.0
    total = None
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            term = mmd2_biased(ordered[i].z, ordered[j].z, kernel)
            if total is None:
                total = term
            elif traced:
                total = ad.add(total, term)
            else:
                total = total + term
    return total
