from __future__ import annotations

import math

import numpy as np

from .base import KdeConfig, KdeEstimator, register_backend, repetitions


def uniform_sample_size(cfg: KdeConfig, m: int) -> int:
    """``ceil(c_u / (mu * eps^2))`` capped at ``m``."""
    want = cfg.sample_constant / (cfg.mu * cfg.eps**2)
    return m if want >= m else max(1, math.ceil(want))


@register_backend("uniform")
class UniformKde(KdeEstimator):
    """Density estimate from a uniform subsample drawn without replacement.

    With ``fail_prob < 1/3`` the structure keeps ``ceil(18 ln(1/fail_prob))``
    independent subsamples and answers with the median of their means. When
    the sample covers every point the estimate is exact and a single copy is
    kept.

    ``sample_size`` overrides the size derived from ``cfg``.
    """

    kde_exponent = 1.0

    def __init__(self, points, kernel, cfg: KdeConfig, rng=None, sample_size: int | None = None):
        super().__init__(points, kernel, cfg)
        m = self.m
        s = uniform_sample_size(cfg, m) if sample_size is None else int(min(max(sample_size, 1), m))
        self.sample_size = s
        self.exact = s >= m
        if self.exact:
            self.samples = np.arange(m)[None, :]
        else:
            if rng is None:
                raise ValueError("uniform KDE needs an rng when subsampling")
            reps = repetitions(cfg.fail_prob)
            self.samples = np.stack([rng.choice(m, size=s, replace=False) for _ in range(reps)])

    @property
    def repetitions(self) -> int:
        return self.samples.shape[0]

    def query_many(self, Q) -> np.ndarray:
        Q = self._check(Q)
        if self.exact:
            return self.kernel.pairwise(Q, self.points).mean(axis=1)
        means = np.stack([self.kernel.pairwise(Q, self.points[idx]).mean(axis=1) for idx in self.samples])
        return np.median(means, axis=0)
