from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..kernels import Kernel, as_points

# median-of-copies amplification: R = ceil(18 ln(1/delta)) copies of a 2/3-success estimator
AMPLIFY_CONSTANT = 18.0


@dataclass(frozen=True)
class KdeConfig:
    """Accuracy contract for a KDE structure.

    Queries whose true mean density is at least ``mu`` are answered within a
    ``(1 +- eps)`` factor with probability at least ``1 - fail_prob``.
    ``sample_constant`` is the slack constant of the uniform sampler.
    """

    mu: float
    eps: float
    fail_prob: float = 1.0 / 3.0
    sample_constant: float = 4.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.mu <= 1:
            raise ValueError("mu must be at most 1")
        if not 0 < self.eps < 1:
            raise ValueError("eps must lie in (0, 1)")
        if not 0 < self.fail_prob < 1:
            raise ValueError("fail_prob must lie in (0, 1)")

    def with_fail_prob(self, fail_prob: float) -> "KdeConfig":
        return replace(self, fail_prob=fail_prob)


def repetitions(fail_prob: float) -> int:
    """Number of independent copies whose median succeeds w.p. ``1 - fail_prob``."""
    if fail_prob >= 1.0 / 3.0:
        return 1
    return math.ceil(AMPLIFY_CONSTANT * math.log(1.0 / fail_prob))


class KdeEstimator:
    """A built structure answering ``(1/m) sum_j k(q, x_j)`` queries.

    Subclasses set ``kde_exponent`` (the ``p`` in the ``mu^-p`` query cost)
    and implement :meth:`query_many`.
    """

    kde_exponent: float = 0.0
    exact: bool = False

    def __init__(self, points, kernel: Kernel, cfg: KdeConfig):
        self.points = as_points(points)
        self.kernel = kernel
        self.cfg = cfg

    @property
    def m(self) -> int:
        return self.points.shape[0]

    def query(self, q) -> float:
        q = np.asarray(q, dtype=np.float64).reshape(1, -1)
        return float(self.query_many(q)[0])

    def query_many(self, Q) -> np.ndarray:
        raise NotImplementedError

    def _check(self, Q):
        Q = np.asarray(Q, dtype=np.float64)
        if Q.ndim == 1:
            Q = Q[None, :]
        if Q.shape[1] != self.points.shape[1]:
            raise ValueError(f"query dimension {Q.shape[1]} does not match {self.points.shape[1]}")
        return Q


_BACKENDS: dict[str, type] = {}


def register_backend(name):
    def deco(cls):
        _BACKENDS[name] = cls
        cls.backend_name = name
        return cls
    return deco


def backend_class(name: str) -> type:
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown KDE backend {name!r}; available: {sorted(_BACKENDS)}") from None


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def kde_build(backend: str, points, kernel: Kernel, cfg: KdeConfig, rng=None, **options) -> KdeEstimator:
    """Build a query-ready KDE structure with the named backend."""
    if not isinstance(kernel, Kernel):
        kernel = Kernel(kernel)
    return backend_class(backend)(points, kernel, cfg, rng=rng, **options)


def kde_query(est: KdeEstimator, q) -> float:
    return est.query(q)
