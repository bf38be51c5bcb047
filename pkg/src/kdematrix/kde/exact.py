from __future__ import annotations

import numpy as np

from .base import KdeEstimator, register_backend


@register_backend("exact")
class ExactKde(KdeEstimator):
    """Brute-force densities. Linear query cost, no density floor needed."""

    kde_exponent = 0.0
    exact = True

    def __init__(self, points, kernel, cfg, rng=None):
        super().__init__(points, kernel, cfg)

    def query_many(self, Q) -> np.ndarray:
        Q = self._check(Q)
        return self.kernel.pairwise(Q, self.points).mean(axis=1)

    def query_sums(self, Q) -> np.ndarray:
        """Unnormalised sums ``sum_j k(q, x_j)``."""
        Q = self._check(Q)
        return self.kernel.pairwise(Q, self.points).sum(axis=1)
