"""Top eigenvector of a kernel matrix with noisy power iterations.

:func:`nonneg_approx_mvm` returns ``Kx + e`` with an entrywise non-negative
error ``e``: the input is rounded up into geometric buckets, each bucket is a
single KDE problem, and every KDE answer is inflated so it over-estimates.
:func:`knpm` runs power iterations on top of it and keeps the iterate with
the best ``z_i^T z_{i+1}``; because all errors are non-negative they cannot
cancel the (non-negative) top eigenvector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .kde import KdeConfig, kde_build
from .kde.uniform import uniform_sample_size
from .kernels import Kernel, _as_kernel, _row_chunk, as_points, exact_mvm


@dataclass(frozen=True)
class MvmConfig:
    """Parameters of the non-negative approximate MVM.

    ``eps_mvm`` is the target ``||e|| <= eps_mvm ||Kx||``; internally the
    rounding and KDE error use ``eps_mvm / error_split`` so that all error
    sources together stay within the target. ``delta`` is the joint failure
    budget of the randomised KDE answers in one call.

    ``sample_rate`` switches the uniform backend to a fixed sampling budget:
    bucket ``i`` gets ``ceil(rate * n * w_i / W)`` samples, where ``w_i`` is
    the bucket's mass and ``W`` the total mass. This keeps the
    mass-proportional allocation implied by the per-bucket density floors
    while letting experiments drive the overall rate.
    """

    eps_mvm: float | None = None
    bucket_constant: float = 6.0
    backend: str = "exact"
    delta: float = 0.01
    error_split: float = 5.0
    sample_constant: float = 4.0
    sample_rate: float | None = None
    backend_options: dict = field(default_factory=dict)

    @property
    def internal_eps(self) -> float:
        return self.eps_mvm / self.error_split


@dataclass
class EigResult:
    z: np.ndarray
    rayleigh: float
    iterations: int
    evals_per_iter: list = field(default_factory=list)
    rel_err_per_iter: list | None = None
    proxies: list = field(default_factory=list)
    best_iteration: int = 0


def bucket_count(n: int, eps: float, c1: float = 6.0) -> int:
    """``ceil(c1 log(n/eps)/eps)``, grown if needed so every remainder entry is tiny.

    Guarantees ``(1 - eps/2)^b < eps / ((b + 1) n^{3/2})`` so that the
    remainder part of a unit vector contributes at most the constant floor to
    every entry of ``K x``.
    """
    b = max(1, math.ceil(c1 * math.log(max(n, 2) / eps) / eps))
    log_r = math.log1p(-eps / 2)
    while b * log_r >= math.log(eps / ((b + 1) * n**1.5)):
        b = math.ceil(b * 1.1) + 1
    return b


def assign_buckets(u: np.ndarray, eps: float, b: int):
    """Bucket indices for a non-negative unit vector.

    Bucket ``i`` (``1 <= i <= b``) holds values in ``[r^i, r^{i-1}]`` with
    ``r = 1 - eps/2``; a value equal to ``r^i`` goes to bucket ``i``. Entries
    below ``r^b`` (including zeros) get index ``b + 1`` (the remainder).
    Returns ``(index, rounded)`` where ``rounded`` is ``r^{i-1}`` inside
    buckets and the original value in the remainder.
    """
    r = 1.0 - eps / 2.0
    log_r = math.log(r)
    idx = np.full(u.shape, b + 1, dtype=np.int64)
    pos = u > 0
    with np.errstate(divide="ignore"):
        raw = np.ceil(np.log(u[pos]) / log_r)
    raw = np.clip(raw, 1, b + 2).astype(np.int64)
    vals = u[pos]
    # repair floating point at the boundaries: need r^i <= u <= r^(i-1)
    too_low = r ** (raw - 1) < vals
    raw[too_low] -= 1
    too_high = r**raw > vals
    raw[too_high & (raw <= b)] += 1
    raw = np.clip(raw, 1, b + 1)
    idx[pos] = raw
    rounded = u.copy()
    inside = idx <= b
    rounded[inside] = r ** (idx[inside] - 1)
    return idx, rounded


def nonneg_approx_mvm(points, kernel, x, cfg: MvmConfig, rng=None) -> np.ndarray:
    """``y = Kx + e`` with ``e >= 0`` entrywise and ``||e|| <= eps_mvm ||Kx||``.

    The guarantee is deterministic for the exact backend and holds with
    probability ``1 - cfg.delta`` for the uniform backend.
    """
    X = as_points(points)
    kernel = _as_kernel(kernel)
    n = X.shape[0]
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"vector length {x.shape} does not match n={n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector must be finite")
    if np.any(x < 0):
        raise ValueError("input vector must be entrywise non-negative")
    scale = float(np.linalg.norm(x))
    if scale == 0:
        raise ValueError("input vector must not be zero")
    if cfg.eps_mvm is None or not 0 < cfg.eps_mvm < 1:
        raise ValueError("eps_mvm must lie in (0, 1)")

    u = x / scale
    a = cfg.internal_eps
    b = bucket_count(n, a, cfg.bucket_constant)
    floor = a / ((b + 1) * math.sqrt(n))
    idx, rounded = assign_buckets(u, a, b)

    y = np.zeros(n)
    if np.any((idx > b) & (u > 0)):
        y += floor  # remainder entries are below eps/((b+1) n^1.5)

    order = np.argsort(idx, kind="stable")
    labels, first, counts = np.unique(idx[order], return_index=True, return_counts=True)
    inside = labels <= b
    labels, first, counts = labels[inside], first[inside], counts[inside]
    if labels.size == 0:
        return y * scale
    r = 1.0 - a / 2.0
    values = r ** (labels - 1)
    masses = counts * values
    fail_prob = cfg.delta / (3.0 * n * b)

    exact_groups = []
    for label, start, count, value, mass in zip(labels, first, counts, values, masses):
        mu = floor / mass
        if mu >= 1:
            y += floor  # the whole bucket contributes at most its mass <= floor
            continue
        members = order[start:start + count]
        if cfg.backend == "exact":
            covered = True
        elif cfg.sample_rate is not None:
            size = math.ceil(cfg.sample_rate * n * mass / masses.sum())
            covered = size >= count
        else:
            kde_cfg = KdeConfig(mu=mu, eps=a, fail_prob=fail_prob, sample_constant=cfg.sample_constant)
            covered = cfg.backend == "uniform" and uniform_sample_size(kde_cfg, int(count)) >= count
        if covered:
            exact_groups.append((members, value))
            continue
        if cfg.sample_rate is not None:
            kde_cfg = KdeConfig(mu=mu, eps=a, sample_constant=cfg.sample_constant)
            est = kde_build(cfg.backend, X[members], kernel, kde_cfg, rng, sample_size=size, **cfg.backend_options)
        else:
            est = kde_build(cfg.backend, X[members], kernel, kde_cfg, rng, **cfg.backend_options)
        contrib = mass * est.query_many(X) / (1.0 - a)
        y += np.maximum(contrib, floor)

    if exact_groups:
        # exact per-bucket densities for all covered buckets in one sweep
        cols = np.concatenate([g[0] for g in exact_groups])
        starts = np.cumsum([0] + [g[0].size for g in exact_groups[:-1]])
        vals = np.array([g[1] for g in exact_groups])
        step = _row_chunk(cols.size)
        for s in range(0, n, step):
            block = kernel.pairwise(X[s:s + step], X[cols])
            sums = np.add.reduceat(block, starts, axis=1)
            y[s:s + step] += np.maximum(sums * vals / (1.0 - a), floor).sum(axis=1)
    return y * scale


def _power_loop(n, iterations, mvm, kernel: Kernel, callback=None, proxy_exact=False) -> EigResult:
    z = np.full(n, 1.0 / math.sqrt(n))
    best_lambda, best_z, best_it = 0.0, z, 0
    evals, proxies = [], []
    start = kernel.evals
    for i in range(iterations):
        y = mvm(i, z)
        lam = float(z @ y)
        evals.append(kernel.evals - start)
        proxies.append(lam)
        if lam > best_lambda:
            best_lambda, best_z, best_it = lam, z, i
        norm = float(np.linalg.norm(y))
        if not norm > 0:
            raise FloatingPointError("power iterate collapsed to zero")
        if callback is not None:
            callback(i, z, y)
        z = y / norm
    return EigResult(z=best_z, rayleigh=best_lambda, iterations=iterations, evals_per_iter=evals,
                     proxies=proxies, best_iteration=best_it)


def knpm_iterations(n: int, eps: float, constant: float = 4.0) -> int:
    return math.ceil(constant * math.log(n / eps) / eps)


def knpm(points, kernel, eps: float, cfg: MvmConfig | None = None, rng=None, iterations: int | None = None,
         iteration_constant: float = 4.0, rate0: float | None = None, growth: float = 1.1,
         callback=None) -> EigResult:
    """Kernel noisy power method.

    Runs ``I + 1`` multiplications (``i = 0..I``) with an
    ``eps^2/12``-non-negative approximate MVM, ``I = ceil(c_I log(n/eps)/eps)``
    unless ``iterations`` is given. Returns the iterate ``z_i`` maximising
    ``z_i^T z_{i+1}``; then ``z^T K z >= (1 - eps) lambda_1`` whenever every
    MVM met its contract.

    With ``rate0`` set, the uniform backend runs on the sampling schedule
    ``rate0 * growth^i`` instead of the error-driven sample sizes.
    ``callback(i, z_i, y)`` sees every iterate and its unnormalised product.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    X = as_points(points)
    kernel = _as_kernel(kernel)
    n = X.shape[0]
    cfg = cfg or MvmConfig()
    if cfg.eps_mvm is None:
        cfg = replace(cfg, eps_mvm=eps**2 / 12.0)
    if rng is None:
        rng = np.random.default_rng()
    total = (iterations if iterations is not None else knpm_iterations(n, eps, iteration_constant) + 1)

    def mvm(i, z):
        step_cfg = cfg if rate0 is None else replace(cfg, sample_rate=rate0 * growth**i)
        return nonneg_approx_mvm(X, kernel, z, step_cfg, rng)

    return _power_loop(n, total, mvm, kernel, callback)


def full_power(points, kernel, iterations: int, callback=None) -> EigResult:
    """Plain power method; every iteration recomputes all ``n^2`` kernel values."""
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    X = as_points(points)
    kernel = _as_kernel(kernel)
    return _power_loop(X.shape[0], iterations, lambda i, z: exact_mvm(X, kernel, z), kernel, callback)


def uniform_mvm(points, kernel, x, rate: float, rng) -> np.ndarray:
    """``K x`` estimated from a uniform column sample of ``ceil(rate n)`` points.

    Every entry is the uniform-sampling KDE estimate ``(n/s) sum_{l in S}
    k(x_j, x_l) x_l`` over one shared sample ``S``; charges ``n * s``
    evaluations. A rate of 1 or more is the exact product.
    """
    X = as_points(points)
    kernel = _as_kernel(kernel)
    n = X.shape[0]
    s = min(n, math.ceil(rate * n))
    if s >= n:
        return exact_mvm(X, kernel, x)
    cols = rng.choice(n, size=s, replace=False)
    w = x[cols] * (n / s)
    out = np.empty(n)
    step = _row_chunk(s)
    for a in range(0, n, step):
        out[a:a + step] = kernel.pairwise(X[a:a + step], X[cols]) @ w
    return out


def uniform_noisy_power(points, kernel, iterations: int, rate0: float, growth: float = 1.1, rng=None,
                        callback=None) -> EigResult:
    """Noisy power method with uniformly sampled products at rate ``rate0 * growth^i``."""
    if not 0 < rate0 <= 1:
        raise ValueError("rate0 must lie in (0, 1]")
    if growth < 1:
        raise ValueError("growth must be at least 1")
    X = as_points(points)
    kernel = _as_kernel(kernel)
    rng = rng if rng is not None else np.random.default_rng()
    return _power_loop(X.shape[0], iterations,
                       lambda i, z: uniform_mvm(X, kernel, z, rate0 * growth**i, rng), kernel, callback)
