"""Kernel functions, evaluation counting and brute-force oracles.

Every kernel value computed anywhere in the package goes through a
:class:`Kernel`, which charges the evaluations to its :class:`EvalCounter`.
The counter is the cost model used by all experiments.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist, pdist

FAMILIES = ("gaussian", "exponential", "laplacian", "rational_quadratic")

_METRIC = {
    "gaussian": "sqeuclidean",
    "exponential": "euclidean",
    "laplacian": "cityblock",
    "rational_quadratic": "sqeuclidean",
}


class ConvergenceError(RuntimeError):
    """Raised when an iterative oracle fails to converge.

    The last iterate is kept on the exception so callers can still inspect it.
    """

    def __init__(self, message, value=None, vector=None):
        super().__init__(message)
        self.value = value
        self.vector = vector


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and parameters.

    Distances are divided by ``bandwidth`` (squared distances by its square
    for the Gaussian and rational quadratic families). ``beta`` is only used
    by the rational quadratic kernel.
    """

    family: str = "gaussian"
    bandwidth: float = 1.0
    beta: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError("bandwidth must be positive")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be positive")

    def profile(self, dist):
        """Map raw distances (in the family's metric) to kernel values."""
        dist = np.asarray(dist, dtype=np.float64)
        if self.family == "gaussian":
            return np.exp(-dist / self.bandwidth**2)
        if self.family == "rational_quadratic":
            return (1.0 + dist / self.bandwidth**2) ** (-self.beta)
        # exponential and laplacian share the same profile on different metrics
        return np.exp(-dist / self.bandwidth)


class EvalCounter:
    """Thread-safe tally of single kernel evaluations."""

    def __init__(self):
        self._count = 0
        self._lock = threading.Lock()

    @property
    def count(self) -> int:
        return self._count

    def add(self, k: int) -> None:
        if k < 0:
            raise ValueError("evaluation counts are non-negative")
        with self._lock:
            self._count += int(k)

    def merge(self, other: "EvalCounter") -> None:
        self.add(other.count)

    def reset(self) -> None:
        with self._lock:
            self._count = 0

    def __repr__(self):
        return f"EvalCounter(count={self._count})"


@dataclass(frozen=True)
class PointSet:
    """``n`` points in ``d`` dimensions; row ``i`` is the point ``x_i``."""

    points: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "points", as_points(self.points))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)


def as_points(x) -> np.ndarray:
    """Validate and return an ``(n, d)`` float64 array with finite entries."""
    if isinstance(x, PointSet):
        return x.points
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"expected a non-empty (n, d) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("points must be finite")
    return np.ascontiguousarray(arr)


class Kernel:
    """A kernel function bound to an evaluation counter.

    >>> k = Kernel(KernelSpec("gaussian"))
    >>> round(k([0.0], [1.0]), 4), k.counter.count
    (0.3679, 1)
    """

    def __init__(self, spec: KernelSpec | None = None, counter: EvalCounter | None = None):
        self.spec = spec if spec is not None else KernelSpec()
        self.counter = counter if counter is not None else EvalCounter()

    @property
    def evals(self) -> int:
        return self.counter.count

    def fresh(self) -> "Kernel":
        """Same kernel, new counter."""
        return Kernel(self.spec)

    def __call__(self, x, y) -> float:
        x = np.asarray(x, dtype=np.float64).ravel()
        y = np.asarray(y, dtype=np.float64).ravel()
        if x.shape != y.shape:
            raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("kernel inputs must be finite")
        self.counter.add(1)
        return float(self.spec.profile(_paired_distance(x[None], y[None], _METRIC[self.spec.family]))[0])

    def pairwise(self, X, Y) -> np.ndarray:
        """Kernel block ``k(X[i], Y[j])``; charges ``len(X) * len(Y)`` evaluations."""
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if X.shape[-1] != Y.shape[-1]:
            raise ValueError(f"dimension mismatch: {X.shape[-1]} vs {Y.shape[-1]}")
        self.counter.add(X.shape[0] * Y.shape[0])
        if X.shape[0] == 0 or Y.shape[0] == 0:
            return np.zeros((X.shape[0], Y.shape[0]))
        return self.spec.profile(cdist(X, Y, _METRIC[self.spec.family]))

    def paired(self, X, Y) -> np.ndarray:
        """Row-aligned values ``k(X[i], Y[i])``; charges ``len(X)`` evaluations."""
        X = np.asarray(X, dtype=np.float64)
        Y = np.asarray(Y, dtype=np.float64)
        if X.shape != Y.shape:
            raise ValueError(f"shape mismatch: {X.shape} vs {Y.shape}")
        lead = X.shape[:-1]
        self.counter.add(int(np.prod(lead)))
        return self.spec.profile(_paired_distance(X, Y, _METRIC[self.spec.family]))

    def condensed(self, X) -> np.ndarray:
        """Values ``k(X[i], X[j])`` for ``i < j`` in condensed order; charges ``m(m-1)/2``."""
        X = np.asarray(X, dtype=np.float64)
        m = X.shape[0]
        self.counter.add(m * (m - 1) // 2)
        if m < 2:
            return np.zeros(0)
        return self.spec.profile(pdist(X, _METRIC[self.spec.family]))

    def batched(self, A, B, valid_a=None, valid_b=None) -> np.ndarray:
        """Blockwise kernels ``k(A[t, i], B[t, j])`` for stacks of blocks.

        ``A`` is ``(T, s, d)`` and ``B`` is ``(T, r, d)``. Rows flagged invalid
        (padding) are not charged and their entries are returned as zero.
        """
        A = np.asarray(A, dtype=np.float64)
        B = np.asarray(B, dtype=np.float64)
        va = np.ones(A.shape[:2], bool) if valid_a is None else np.asarray(valid_a, bool)
        vb = np.ones(B.shape[:2], bool) if valid_b is None else np.asarray(valid_b, bool)
        mask = va[:, :, None] & vb[:, None, :]
        self.counter.add(int(np.count_nonzero(mask)))
        diff = A[:, :, None, :] - B[:, None, :, :]
        metric = _METRIC[self.spec.family]
        if metric == "cityblock":
            dist = np.abs(diff).sum(-1)
        else:
            dist = np.einsum("...k,...k->...", diff, diff)
            if metric == "euclidean":
                dist = np.sqrt(dist)
        vals = self.spec.profile(np.where(mask, dist, 0.0))
        return np.where(mask, vals, 0.0)


def _paired_distance(X, Y, metric):
    diff = X - Y
    if metric == "cityblock":
        return np.abs(diff).sum(-1)
    sq = np.einsum("...k,...k->...", diff, diff)
    return np.sqrt(sq) if metric == "euclidean" else sq


def kernel_eval(spec: KernelSpec, x, y, counter: EvalCounter) -> float:
    """Evaluate ``k(x, y)`` once, charging ``counter``."""
    return Kernel(spec, counter)(x, y)


def _as_kernel(kernel) -> Kernel:
    if isinstance(kernel, Kernel):
        return kernel
    if isinstance(kernel, KernelSpec):
        return Kernel(kernel)
    raise TypeError(f"expected Kernel or KernelSpec, got {type(kernel).__name__}")


def _row_chunk(n: int, budget: int = 4_000_000) -> int:
    return max(1, budget // max(n, 1))


def exact_sum(points, kernel) -> float:
    """Sum of all kernel matrix entries by brute force.

    Uses the symmetric half loop: exactly ``n(n-1)/2 + n`` evaluations are
    charged (each unordered off-diagonal pair once, plus the diagonal).
    """
    X = as_points(points)
    kernel = _as_kernel(kernel)
    n = X.shape[0]
    step = _row_chunk(n)
    total = float(kernel.paired(X, X).sum())
    off = 0.0
    for a in range(0, n, step):
        b = min(n, a + step)
        if b < n:
            off += kernel.pairwise(X[a:b], X[b:]).sum()
        iu, ju = np.triu_indices(b - a, k=1)
        if iu.size:
            off += kernel.paired(X[a + iu], X[a + ju]).sum()
    return total + 2.0 * off


def exact_row_sums(points, kernel, rows=None) -> np.ndarray:
    """Off-diagonal row sums ``s_{o,i} = sum_{j != i} k(x_i, x_j)`` by linear scan.

    Charges ``m - 1`` evaluations per requested row.
    """
    X = as_points(points)
    kernel = _as_kernel(kernel)
    m = X.shape[0]
    rows = np.arange(m) if rows is None else np.asarray(rows, dtype=np.intp)
    out = np.empty(rows.size)
    step = _row_chunk(m)
    for a in range(0, rows.size, step):
        r = rows[a:a + step]
        # the diagonal entry is known to be 1; evaluate only j != i
        cols = np.arange(m - 1)[None, :]
        cols = cols + (cols >= r[:, None])
        vals = kernel.paired(np.broadcast_to(X[r][:, None, :], (r.size, m - 1, X.shape[1])), X[cols])
        out[a:a + step] = vals.sum(axis=1)
    return out


def exact_mvm(points, kernel, x) -> np.ndarray:
    """Exact ``K x`` computed on the fly; charges ``n^2`` evaluations."""
    X = as_points(points)
    kernel = _as_kernel(kernel)
    n = X.shape[0]
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise ValueError(f"vector length {x.shape} does not match n={n}")
    if not np.all(np.isfinite(x)):
        raise ValueError("vector must be finite")
    out = np.empty(n)
    step = _row_chunk(n)
    for a in range(0, n, step):
        out[a:a + step] = kernel.pairwise(X[a:a + step], X) @ x
    return out


def power_until_converged(matvec, n, tol=1e-10, max_iter=10_000):
    """Power method from the uniform vector until Rayleigh quotients settle.

    Stops when successive quotients differ by less than ``tol * lambda``.
    Returns ``(lambda, v, iterations)`` with ``lambda = v^T K v`` for the unit
    iterate ``v``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    z = np.full(n, 1.0 / math.sqrt(n))
    prev = None
    for it in range(1, max_iter + 1):
        y = matvec(z)
        lam = float(z @ y)
        if prev is not None and abs(lam - prev) < tol * lam:
            return lam, z, it
        prev = lam
        z = y / np.linalg.norm(y)
    raise ConvergenceError(f"power method did not converge in {max_iter} iterations", lam, z)


def exact_top_eig(points, kernel, tol: float = 1e-10, max_iter: int = 10_000):
    """Top eigenpair of the kernel matrix via the full power method.

    Returns ``(lambda1, v1)`` with ``v1`` a non-negative unit vector and
    ``lambda1 = v1^T K v1``. Raises :class:`ConvergenceError` after
    ``max_iter`` iterations.
    """
    X = as_points(points)
    kernel = _as_kernel(kernel)
    lam, v, _ = power_until_converged(lambda z: exact_mvm(X, kernel, z), X.shape[0], tol, max_iter)
    return lam, np.maximum(v, 0.0)
