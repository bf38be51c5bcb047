"""Grid-based Fast Gauss Transform with truncated Taylor expansions.

Points are bucketed into a sparse grid of hypercubes of diameter
``R = sqrt(log(1/eps))`` (in bandwidth units). For a query ``q`` only the
cells meeting the ball of radius ``R`` around ``q`` are examined; every other
point has kernel value below ``eps`` and is dropped. Inside a cell with
centre ``c`` the kernel factorises as

    exp(-|q-p|^2) = exp(-|q'|^2) exp(-|p'|^2) exp(2 q'.p'),   q' = q-c, p' = p-c,

and ``exp(2 q'.p')`` is truncated to a Taylor polynomial. Expanding the
powers of ``q'.p'`` into monomials turns each term into a dot product
between a query feature vector and per-cell moment vectors that are summed
once at build time.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .base import KdeEstimator, register_backend

MAX_ORDER = 400
# |2 q'.p'| <= 2 * (R + R/2) * (R/2) for any touched cell of diameter R
CROSS_TERM_WINDOW = 1.5


def taylor_order(eps_additive: float, window: float | None = None) -> int:
    """Smallest ``r`` whose Taylor remainder of ``exp(x)`` is at most ``eps/2``.

    The remainder bound is ``sum_{j>r} |x|^j / j!`` evaluated at
    ``|x| = window``; the default window is ``10 log(1/eps)``.
    """
    if not 0 < eps_additive < 1:
        raise ValueError("eps_additive must lie in (0, 1)")
    x = 10.0 * math.log(1.0 / eps_additive) if window is None else float(window)
    if x < 0:
        raise ValueError("window must be non-negative")
    target = eps_additive / 2.0
    if x == 0.0:
        return 0
    # terms x^j/j! peak near j = x; stop once they are negligible past the peak
    terms = [1.0]
    j = 0
    while True:
        j += 1
        terms.append(terms[-1] * x / j)
        if j > x and terms[-1] < target * 1e-17:
            break
    tails = np.cumsum(terms[::-1])[::-1]  # tails[r] = sum_{j>=r} terms[j]
    for r in range(len(terms) - 1):
        if tails[r + 1] <= target:
            return r
    raise AssertionError("unreachable: the series tail vanishes")


@lru_cache(maxsize=64)
def monomial_exponents(d: int, r: int) -> np.ndarray:
    """All exponent vectors of total degree exactly ``r`` in ``d`` variables.

    Rows are in lexicographic order of the sorted variable multiset, which is
    the fixed order shared by :func:`monomial_features` on both sides.
    """
    if r < 0 or d < 1:
        raise ValueError("need r >= 0 and d >= 1")
    if r > MAX_ORDER:
        raise ValueError(f"order {r} exceeds the cap {MAX_ORDER}")
    rows = []
    for combo in itertools.combinations_with_replacement(range(d), r):
        row = [0] * d
        for k in combo:
            row[k] += 1
        rows.append(row)
    out = np.array(rows, dtype=np.int64).reshape(-1, d)
    out.setflags(write=False)
    return out


def _log_multinomial(exps: np.ndarray) -> np.ndarray:
    lg = np.vectorize(math.lgamma, otypes=[float])
    return lg(exps.sum(axis=1) + 1.0) - lg(exps + 1.0).sum(axis=1)


def monomial_features(v, r: int, side: str = "x") -> np.ndarray:
    """Feature map with ``features(q, r, "x") . features(p, r, "y") == (q.p)^r``.

    Convention: the query side ``"x"`` carries the multinomial coefficients
    ``r! / alpha!``; the data side ``"y"`` is the plain monomial ``p^alpha``.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    exps = monomial_exponents(v.size, int(r))
    mono = np.prod(v[None, :] ** exps, axis=1)
    if side == "y":
        return mono
    if side != "x":
        raise ValueError("side must be 'x' or 'y'")
    return np.rint(np.exp(_log_multinomial(exps))) * mono


@lru_cache(maxsize=16)
def _expansion(d: int, r_max: int):
    """Exponents of degree <= r_max with coefficients 2^|a| / a!."""
    exps = np.concatenate([monomial_exponents(d, r) for r in range(r_max + 1)])
    lg = np.vectorize(math.lgamma, otypes=[float])
    coef = np.exp(exps.sum(axis=1) * math.log(2.0) - lg(exps + 1.0).sum(axis=1))
    return exps, coef


def _monomials(V: np.ndarray, exps: np.ndarray) -> np.ndarray:
    """``V[i]^exps[f]`` for every row of ``V``; shape ``(len(V), len(exps))``."""
    r_max = int(exps.max()) if exps.size else 0
    powers = V[:, None, :] ** np.arange(r_max + 1)[None, :, None]  # (n, r+1, d)
    out = np.ones((V.shape[0], exps.shape[0]))
    for k in range(V.shape[1]):
        out *= powers[:, exps[:, k], k]
    return out


@register_backend("fgt")
class FgtKde(KdeEstimator):
    """Gaussian KDE with additive error ``eps_additive`` (defaults to ``cfg.eps``).

    No kernel evaluations are charged: queries are arithmetic on moments.
    """

    kde_exponent = 0.0
    _chunk = 512

    def __init__(self, points, kernel, cfg, rng=None, eps_additive: float | None = None):
        super().__init__(points, kernel, cfg)
        if kernel.spec.family != "gaussian":
            raise ValueError(f"fgt backend supports the gaussian kernel only, not {kernel.spec.family!r}")
        eps = cfg.eps if eps_additive is None else float(eps_additive)
        if not 0 < eps < 1:
            raise ValueError("eps_additive must lie in (0, 1)")
        self.eps_additive = eps
        d = self.points.shape[1]
        self.radius_sq = math.log(1.0 / eps)
        self.radius = math.sqrt(self.radius_sq)
        self.cell_side = self.radius / math.sqrt(d)
        self.r_max = taylor_order(eps, CROSS_TERM_WINDOW * self.radius_sq)
        self._exps, self._coef = _expansion(d, self.r_max)

        u = self.points / kernel.spec.bandwidth
        cells = np.floor(u / self.cell_side).astype(np.int64)
        keys, inv, counts = np.unique(cells, axis=0, return_inverse=True, return_counts=True)
        inv = inv.ravel()
        self.cell_coords = keys
        self.cell_counts = counts
        self.cell_centers = (keys + 0.5) * self.cell_side
        self.cell_map = {tuple(k): i for i, k in enumerate(keys.tolist())}
        moments = np.zeros((keys.shape[0], self._exps.shape[0]))
        for a in range(0, u.shape[0], self._chunk):
            off = u[a:a + self._chunk] - self.cell_centers[inv[a:a + self._chunk]]
            feat = _monomials(off, self._exps) * (self._coef * np.exp(-np.einsum("ij,ij->i", off, off))[:, None])
            np.add.at(moments, inv[a:a + self._chunk], feat)
        self.moments = moments

        reach = math.ceil(self.radius / self.cell_side) + 1
        self._offsets = np.array(list(itertools.product(range(-reach, reach + 1), repeat=d)), dtype=np.int64)

    def touched_cells(self, q) -> np.ndarray:
        """Indices (into ``cell_coords``) of occupied cells meeting the search ball."""
        uq = np.asarray(q, dtype=np.float64).ravel() / self.kernel.spec.bandwidth
        cand = np.floor(uq / self.cell_side).astype(np.int64) + self._offsets
        lo = cand * self.cell_side
        gap = np.maximum(np.maximum(lo - uq, uq - (lo + self.cell_side)), 0.0)
        near = cand[np.einsum("ij,ij->i", gap, gap) <= self.radius_sq]
        hits = [self.cell_map.get(tuple(c)) for c in near.tolist()]
        return np.array([h for h in hits if h is not None], dtype=np.intp)

    def query_many(self, Q) -> np.ndarray:
        Q = self._check(Q)
        out = np.empty(Q.shape[0])
        for i, q in enumerate(Q):
            idx = self.touched_cells(q)
            if idx.size == 0:
                out[i] = 0.0
                continue
            qo = q / self.kernel.spec.bandwidth - self.cell_centers[idx]
            vals = np.einsum("cf,cf->c", _monomials(qo, self._exps), self.moments[idx])
            total = float(np.exp(-np.einsum("ij,ij->i", qo, qo)) @ vals)
            out[i] = max(total / self.m, 0.0)
        return out
