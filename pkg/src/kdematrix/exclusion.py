"""Leave-one-out kernel sums from a dyadic family of static KDE structures.

Level ``l`` (``1 <= l <= L = ceil(log2 m)``) splits the index range, padded to
``M = 2^L``, into ``2^l`` contiguous blocks of size ``M / 2^l``. For a row
``i`` the sibling of its own block at every level gives a partition of
``[0, m) \\ {i}``, so ``sum_{j != i} k(x_i, x_j)`` is the size-weighted sum of
one density query per level. Blocks that fall entirely in the padding are
empty and answer zero.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.spatial.distance import squareform

from .kde import KdeConfig, kde_build
from .kde.uniform import uniform_sample_size
from .kernels import Kernel, as_points


class DyadicExclusionIndex:
    """Dyadic collection of KDE structures answering exclusion queries.

    ``fail_prob`` of ``cfg`` is the per-structure failure probability; pass
    ``amplify=True`` to tighten it to ``1/m^2`` (median of independent
    copies inside randomised backends).
    """

    def __init__(self, points, kernel: Kernel, cfg: KdeConfig, backend: str = "exact", rng=None,
                 amplify: bool = False, **backend_options):
        X = as_points(points)
        m = X.shape[0]
        if m < 2:
            raise ValueError("the exclusion index needs at least two points")
        self.points = X
        self.kernel = kernel
        self.backend = backend
        self.cfg = cfg.with_fail_prob(min(cfg.fail_prob, 1.0 / m**2)) if amplify else cfg
        self.rng = rng
        self.backend_options = backend_options
        self.m = m
        self.n_levels = math.ceil(math.log2(m))
        self.padded = 2**self.n_levels
        self._estimators: dict[tuple[int, int], object] = {}
        self.queries = 0

    def block_size(self, level: int) -> int:
        return self.padded >> level

    def block_range(self, level: int, block: int) -> tuple[int, int]:
        s = self.block_size(level)
        return min(block * s, self.m), min((block + 1) * s, self.m)

    def bounds(self, level: int) -> np.ndarray:
        """``(2^level, 2)`` array of ``[start, stop)`` block boundaries."""
        starts = np.arange(2**level) * self.block_size(level)
        return np.minimum(np.stack([starts, starts + self.block_size(level)], axis=1), self.m)

    def sibling_blocks(self, i: int) -> list[tuple[int, int]]:
        """``(level, block)`` of the sibling block queried for row ``i`` at each level."""
        self._check_row(i)
        return [(lvl, (i // self.block_size(lvl)) ^ 1) for lvl in range(1, self.n_levels + 1)]

    def estimator(self, level: int, block: int):
        """KDE structure over one block, built on first use; ``None`` if empty."""
        key = (level, block)
        if key not in self._estimators:
            a, b = self.block_range(level, block)
            self._estimators[key] = (
                kde_build(self.backend, self.points[a:b], self.kernel, self.cfg, self.rng, **self.backend_options)
                if b > a else None
            )
        return self._estimators[key]

    @property
    def levels(self) -> list[list]:
        """Per level, the ``2^level`` block structures (``None`` for empty blocks)."""
        return [[self.estimator(lvl, b) for b in range(2**lvl)] for lvl in range(1, self.n_levels + 1)]

    def query(self, i: int) -> float:
        """Estimate of ``s_{o,i} = sum_{j != i} k(x_i, x_j)``.

        Exactly one structure query is made per level; empty sibling blocks
        answer zero without touching a structure.
        """
        total = 0.0
        q = self.points[i]
        for lvl, blk in self.sibling_blocks(i):
            self.queries += 1
            est = self.estimator(lvl, blk)
            if est is not None:
                total += est.m * est.query(q)
        return total

    def covers_exactly(self) -> bool:
        """True when every block structure answers exactly."""
        if self.backend == "exact":
            return True
        if self.backend == "uniform" and "sample_size" not in self.backend_options:
            return uniform_sample_size(self.cfg, self.padded) >= self.padded // 2
        return False

    def query_all(self) -> np.ndarray:
        """Estimates of ``s_{o,i}`` for every row.

        When every block structure is exact (exact backend, or uniform
        samples covering whole blocks) the sibling-block sums of a level are
        computed together; each unordered sibling pair is evaluated once.
        """
        if not self.covers_exactly():
            out = np.zeros(self.m)
            for lvl in range(1, self.n_levels + 1):
                s = self.block_size(lvl)
                for blk in range(2**lvl):
                    a, b = self.block_range(lvl, blk ^ 1)
                    est = self.estimator(lvl, blk)
                    if a >= b or est is None:
                        continue
                    out[a:b] += est.m * est.query_many(self.points[a:b])
                    self.queries += b - a
            return out

        if self.m <= self._condensed_limit:
            # every sibling pair is one unordered pair; evaluate each once
            vals = squareform(self.kernel.condensed(self.points), checks=False)
            self.queries += self.m * self.n_levels
            return vals.sum(axis=1)

        d = self.points.shape[1]
        padded = np.zeros((self.padded, d))
        padded[: self.m] = self.points
        valid = np.arange(self.padded) < self.m
        out = np.zeros(self.padded)
        for lvl in range(1, self.n_levels + 1):
            s = self.block_size(lvl)
            pairs = padded.reshape(-1, 2, s, d)
            vpairs = valid.reshape(-1, 2, s)
            live = vpairs[:, 1].any(axis=1)  # second block non-empty
            if not live.any():
                continue
            kab = self.kernel.batched(pairs[live, 0], pairs[live, 1], vpairs[live, 0], vpairs[live, 1])
            sums = np.zeros((pairs.shape[0], 2, s))
            sums[live, 0] = kab.sum(axis=2)
            sums[live, 1] = kab.sum(axis=1)
            out += sums.reshape(-1)
            self.queries += self.m
        return out[: self.m]

    _condensed_limit = 2048

    def _check_row(self, i):
        if not 0 <= i < self.m:
            raise IndexError(f"row {i} out of range for m={self.m}")


def exclusion_build(points, kernel, cfg, backend="exact", rng=None, **kwargs) -> DyadicExclusionIndex:
    return DyadicExclusionIndex(points, kernel, cfg, backend, rng, **kwargs)


def exclusion_query(index: DyadicExclusionIndex, i: int) -> float:
    return index.query(i)
