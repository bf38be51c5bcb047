"""Sublinear estimation of kernel matrix sums.

The estimator samples a random principal submatrix ``K_A`` (each index kept
independently with probability ``p``) and returns ``Z = n + s_o(K_A) / p^2``,
which is unbiased for ``s(K)``. Averages of independent ``Z`` draws are
combined by a median over batches. The off-diagonal sum of each submatrix is
estimated with KDE structures over a dyadic exclusion index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .exclusion import DyadicExclusionIndex
from .kde import KdeConfig, backend_class
from .kde.uniform import uniform_sample_size
from .kernels import _as_kernel, as_points, exact_row_sums


@dataclass(frozen=True)
class SamplerConfig:
    """Constants and switches of the sum estimator.

    ``sample_prob=None`` means ``1/sqrt(n)``; ``heavy_threshold=None`` means
    ``m^{2p/(2+p)} eps^{2/(2+p)}`` with ``p`` the backend's KDE exponent.
    ``off_diag`` picks the submatrix routine: ``"fast"``, ``"simple"`` or
    ``"exact"`` (brute force, for reference runs).
    """

    sample_prob: float | None = None
    z_constant: float = 16.0
    median_constant: float = 1.0
    phase2_constant: float = 4.0
    mu_constant: float = 1.0
    heavy_threshold: float | None = None
    phase2_samples: int | None = None
    backend: str = "uniform"
    off_diag: str = "fast"
    backend_options: dict = field(default_factory=dict)

    def z_repetitions(self, eps: float) -> int:
        return math.ceil(self.z_constant / eps**2)

    def median_batches(self, delta: float) -> int:
        return max(1, math.ceil(self.median_constant * math.log(1.0 / delta)))

    @property
    def kde_exponent(self) -> float:
        return backend_class(self.backend).kde_exponent

    def threshold(self, m: int, eps: float) -> float:
        if self.heavy_threshold is not None:
            return self.heavy_threshold
        p = self.kde_exponent
        return m ** (2 * p / (2 + p)) * eps ** (2 / (2 + p))


@dataclass
class SumEstimate:
    value: float
    eps: float
    delta: float
    points_sampled: int
    evals: int
    draws: int = 0
    batch_means: list = field(default_factory=list)


def sample_submatrix(n: int, prob: float, rng) -> np.ndarray:
    """Sorted index subset, each index included independently w.p. ``prob``."""
    if not 0 < prob <= 1:
        raise ValueError("prob must lie in (0, 1]")
    if prob == 1:
        return np.arange(n)
    size = rng.binomial(n, prob)
    return np.sort(rng.choice(n, size=size, replace=False))


def off_diag_sum_simple(sub, kernel, eps: float, backend: str = "uniform", rng=None,
                        mu_constant: float = 1.0, **backend_options) -> float:
    """Off-diagonal sum of a small kernel matrix via one exclusion query per row.

    The density floor is ``mu_constant * eps / m^2``; rows whose true sum is
    below ``eps / m`` may be misestimated, which costs at most ``eps`` total.
    """
    X = as_points(sub)
    kernel = _as_kernel(kernel)
    m = X.shape[0]
    if m < 2:
        raise ValueError("need at least two points")
    cfg = KdeConfig(mu=min(1.0, mu_constant * eps / m**2), eps=eps)
    index = DyadicExclusionIndex(X, kernel, cfg, backend, rng, amplify=True, **backend_options)
    return float(index.query_all().sum())


def off_diag_sum_fast(sub, kernel, eps: float, cfg: SamplerConfig | None = None, rng=None,
                      return_parts: bool = False):
    """Two-phase off-diagonal sum: heavy rows exactly, light rows by sampling.

    Phase one queries an exclusion index with density floor ``t/m^2`` and
    treats rows whose reported density reaches the floor as heavy; their row
    sums are recomputed exactly (or reused, when the index itself is exact). Phase two draws ``ceil(c_s t^2 / eps^4)``
    light rows without replacement (all of them when that many exist),
    computes their row sums exactly and scales the mean by the light count.
    """
    cfg = cfg or SamplerConfig()
    X = as_points(sub)
    kernel = _as_kernel(kernel)
    m = X.shape[0]
    if m < 2:
        raise ValueError("need at least two points")
    t = cfg.threshold(m, eps)
    if not t > 0:
        raise ValueError("heavy threshold must be positive")
    mu = min(1.0, t / m**2)
    kde_cfg = KdeConfig(mu=mu, eps=eps)
    want = cfg.phase2_samples if cfg.phase2_samples is not None else math.ceil(cfg.phase2_constant * t**2 / eps**4)
    if not return_parts and want >= m and _index_is_exact(cfg, kde_cfg, m):
        # both phases would reproduce exact row sums: same value, same m(m-1)/2 evaluations
        return 2.0 * float(kernel.condensed(X).sum())
    index = DyadicExclusionIndex(X, kernel, kde_cfg, cfg.backend, rng, amplify=True, **cfg.backend_options)
    reported = index.query_all()
    heavy = np.flatnonzero(reported / m >= mu)
    light = np.setdiff1d(np.arange(m), heavy, assume_unique=True)
    exact_index = index.covers_exactly()

    def row_sums(rows):
        # an exact index already reported the true row sums
        return reported[rows] if exact_index else exact_row_sums(X, kernel, rows)

    heavy_total = float(row_sums(heavy).sum()) if heavy.size else 0.0

    light_total = 0.0
    if light.size:
        if want >= light.size:
            rows = light
        else:
            if rng is None:
                raise ValueError("phase two sampling needs an rng")
            rows = rng.choice(light, size=want, replace=False)
        light_total = float(row_sums(rows).mean()) * light.size
    if return_parts:
        return heavy_total + light_total, heavy, light
    return heavy_total + light_total


def _index_is_exact(cfg: SamplerConfig, kde_cfg: KdeConfig, m: int) -> bool:
    if cfg.backend == "exact":
        return True
    if cfg.backend != "uniform" or "sample_size" in cfg.backend_options:
        return False
    padded = 2 ** math.ceil(math.log2(m))
    amplified = kde_cfg.with_fail_prob(min(kde_cfg.fail_prob, 1.0 / m**2))
    return uniform_sample_size(amplified, padded) >= padded // 2


def _off_diag(sub, kernel, eps, cfg: SamplerConfig, rng) -> float:
    if cfg.off_diag == "fast":
        return off_diag_sum_fast(sub, kernel, eps, cfg, rng)
    if cfg.off_diag == "simple":
        return off_diag_sum_simple(sub, kernel, eps, cfg.backend, rng, cfg.mu_constant, **cfg.backend_options)
    if cfg.off_diag == "exact":
        return float(exact_row_sums(sub, kernel).sum())
    raise ValueError(f"unknown off_diag mode {cfg.off_diag!r}")


def draw_z(points, kernel, prob: float, rng, eps: float | None = None, cfg: SamplerConfig | None = None):
    """One draw of ``Z = n + s_o(K_A)/p^2``; returns ``(Z, |A|)``.

    With ``eps=None`` the submatrix sum is computed exactly and nothing is
    truncated (the unbiased estimator). Otherwise the configured off-diagonal
    routine is used and estimates below ``eps`` count as zero.
    """
    X = as_points(points)
    kernel = _as_kernel(kernel)
    n = X.shape[0]
    A = sample_submatrix(n, prob, rng)
    if A.size <= 1:
        return float(n), int(A.size)
    if eps is None:
        s_o = float(exact_row_sums(X[A], kernel).sum())
    else:
        s_o = _off_diag(X[A], kernel, eps, cfg or SamplerConfig(), rng)
        if s_o < eps:
            s_o = 0.0
    return n + s_o / prob**2, int(A.size)


def estimate_sum(points, kernel, eps: float, delta: float, cfg: SamplerConfig | None = None, rng=None) -> SumEstimate:
    """``(1 +- eps)`` estimate of ``sum_{i,j} k(x_i, x_j)`` w.p. ``1 - delta``.

    Median over ``median_batches(delta)`` batch means, each averaging
    ``z_repetitions(eps)`` independent draws on fresh submatrices.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    cfg = cfg or SamplerConfig()
    rng = rng if rng is not None else np.random.default_rng()
    X = as_points(points)
    kernel = _as_kernel(kernel)
    n = X.shape[0]
    prob = cfg.sample_prob if cfg.sample_prob is not None else min(1.0, 1.0 / math.sqrt(n))
    start = kernel.evals
    reps, batches = cfg.z_repetitions(eps), cfg.median_batches(delta)
    sampled = 0
    means = []
    for _ in range(batches):
        acc = 0.0
        for _ in range(reps):
            z, size = draw_z(X, kernel, prob, rng, eps, cfg)
            acc += z
            sampled += size
        means.append(acc / reps)
    return SumEstimate(
        value=float(np.median(means)),
        eps=eps,
        delta=delta,
        points_sampled=sampled,
        evals=kernel.evals - start,
        draws=reps * batches,
        batch_means=means,
    )


def claim1_baseline(points, kernel, eps: float, delta: float, rng=None, constant: float = 4.0,
                    chunk: int = 1 << 20) -> SumEstimate:
    """Uniform off-diagonal entry sampling with ``t = ceil(c n ln(1/delta) / eps^2)``."""
    X = as_points(points)
    kernel = _as_kernel(kernel)
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least two points")
    rng = rng if rng is not None else np.random.default_rng()
    t = math.ceil(constant * n * math.log(1.0 / delta) / eps**2)
    start = kernel.evals
    total = 0.0
    for a in range(0, t, chunk):
        size = min(chunk, t - a)
        i = rng.integers(0, n, size)
        j = rng.integers(0, n - 1, size)
        j += j >= i
        total += kernel.paired(X[i], X[j]).sum()
    return SumEstimate(
        value=n + n * (n - 1) / t * total,
        eps=eps,
        delta=delta,
        points_sampled=2 * t,
        evals=kernel.evals - start,
        draws=t,
    )


def product_lift(X, Xp) -> np.ndarray:
    """Concatenate ``x_i`` and ``x'_i`` so a product-closed kernel gives ``K o K'``."""
    A, B = as_points(X), as_points(Xp)
    if A.shape[0] != B.shape[0]:
        raise ValueError(f"point sets differ in size: {A.shape[0]} vs {B.shape[0]}")
    return np.hstack([A, B])


PRODUCT_CLOSED = ("gaussian", "laplacian")


def kernel_alignment(X, Xp, kernel, eps: float, delta: float, cfg: SamplerConfig | None = None, rng=None,
                     sum_fn=None) -> float:
    """Alignment ``<K,K'> / sqrt(<K,K> <K',K'>)`` from three lifted kernel sums.

    Each sum is estimated to ``(1 +- eps/(2+eps))`` with failure ``delta/3``,
    which keeps the ratio within ``(1 +- eps)``. ``sum_fn(points)`` replaces
    the estimator (e.g. with ``exact_sum``) when given.
    """
    kernel = _as_kernel(kernel)
    if kernel.spec.family not in PRODUCT_CLOSED:
        raise ValueError(f"{kernel.spec.family!r} kernels are not closed under products")
    rng = rng if rng is not None else np.random.default_rng()
    inner = eps / (2.0 + eps)
    if sum_fn is None:
        def sum_fn(P):
            return estimate_sum(P, kernel, inner, delta / 3.0, cfg, rng).value
    cross = sum_fn(product_lift(X, Xp))
    left = sum_fn(product_lift(X, X))
    right = sum_fn(product_lift(Xp, Xp))
    return cross / math.sqrt(left * right)
