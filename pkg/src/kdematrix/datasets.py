"""Point set loading and synthetic instance generators."""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .kernels import PointSet

FORMATS = ("csv", "libsvm", "whitespace")


class DatasetError(ValueError):
    """Malformed or unusable input file; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


@dataclass(frozen=True)
class DatasetSource:
    """Where and how to read a point set.

    For ``csv`` and ``whitespace`` files the last column is read as an
    integer label only when ``has_labels`` is set or a ``class_filter`` is
    given. libsvm files are always labelled; ``dim`` fixes their dimension
    (otherwise the largest index seen). ``normalize`` rescales every column
    to ``[0, 1]``.
    """

    path: str | Path
    format: str = "csv"
    class_filter: int | None = None
    normalize: bool = False
    has_labels: bool = False
    dim: int | None = None

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ValueError(f"unknown format {self.format!r}; expected one of {FORMATS}")

    @property
    def labelled(self) -> bool:
        return self.format == "libsvm" or self.has_labels or self.class_filter is not None


def _parse_label(tok: str, line: int) -> int:
    try:
        val = float(tok)
    except ValueError:
        raise DatasetError(f"bad label {tok!r}", line) from None
    if not val.is_integer():
        raise DatasetError(f"label {tok!r} is not an integer", line)
    return int(val)


def _read_delimited(lines, sep, labelled):
    rows, labels = [], []
    width = None
    for no, raw in lines:
        toks = [t.strip() for t in raw.split(sep)] if sep else raw.split()
        if labelled:
            if len(toks) < 2:
                raise DatasetError("need at least one feature and a label", no)
            labels.append(_parse_label(toks[-1], no))
            toks = toks[:-1]
        try:
            row = [float(t) for t in toks]
        except ValueError as exc:
            raise DatasetError(str(exc), no) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise DatasetError(f"expected {width} features, found {len(row)}", no)
        rows.append(row)
    return rows, labels


def _read_libsvm(lines, dim):
    entries, labels = [], []
    top = 0
    for no, raw in lines:
        toks = raw.split()
        labels.append(_parse_label(toks[0], no))
        row = {}
        for tok in toks[1:]:
            m = re.fullmatch(r"(\d+):(\S+)", tok)
            if not m or int(m.group(1)) < 1:
                raise DatasetError(f"bad feature {tok!r}", no)
            try:
                row[int(m.group(1))] = float(m.group(2))
            except ValueError:
                raise DatasetError(f"bad value in {tok!r}", no) from None
        if row:
            top = max(top, max(row))
        if dim is not None and top > dim:
            raise DatasetError(f"feature index {top} exceeds dimension {dim}", no)
        entries.append(row)
    d = dim if dim is not None else top
    if d < 1:
        raise DatasetError("no features found")
    rows = np.zeros((len(entries), d))
    for r, row in enumerate(entries):
        for k, v in row.items():
            rows[r, k - 1] = v
    return rows, labels


def _looks_like_header(line: str, sep) -> bool:
    toks = line.split(sep) if sep else line.split()
    for t in toks:
        try:
            float(t)
        except ValueError:
            return True
    return False


def load_dataset(src: DatasetSource) -> PointSet:
    """Read ``src`` into a :class:`PointSet`, keeping file order.

    Blank lines and lines starting with ``#`` are skipped. A first non-blank
    csv/whitespace line containing a non-numeric token is taken as a header.
    """
    path = Path(src.path)
    with path.open() as fh:
        lines = [(no, ln.strip()) for no, ln in enumerate(fh, start=1)]
    lines = [(no, ln) for no, ln in lines if ln and not ln.startswith("#")]
    if src.format == "libsvm":
        data, labels = _read_libsvm(lines, src.dim)
        data = np.asarray(data)
    else:
        sep = "," if src.format == "csv" else None
        if lines and _looks_like_header(lines[0][1], sep):
            lines = lines[1:]
        rows, labels = _read_delimited(lines, sep, src.labelled)
        data = np.asarray(rows, dtype=np.float64).reshape(len(rows), -1)
    if src.class_filter is not None:
        data = data[np.asarray(labels, dtype=np.int64) == src.class_filter]
    if data.shape[0] == 0:
        raise DatasetError("no points left to load")
    if data.shape[1] == 0:
        raise DatasetError("points have no features")
    if not np.all(np.isfinite(data)):
        raise DatasetError("non-finite feature values")
    if src.normalize:
        lo, hi = data.min(axis=0), data.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        data = (data - lo) / span
    return PointSet(data)


def far_spacing(bandwidth: float) -> float:
    """Lattice spacing making off-diagonal kernel values negligible (< 1e-15)."""
    return 20.0 * bandwidth * math.sqrt(math.log(1.0 / np.finfo(np.float64).eps))


def gen_far_apart(n: int, d: int, rng, bandwidth: float = 1.0) -> np.ndarray:
    """``n`` distinct points on a random subset of a coarse integer lattice."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    side = max(2, math.ceil(n ** (1.0 / d)))
    while side**d < n:
        side += 1
    cells = rng.choice(side**d, size=n, replace=False)
    coords = np.stack(np.unravel_index(cells, (side,) * d), axis=1).astype(np.float64)
    return coords * far_spacing(bandwidth)


def _collapse(points: np.ndarray, size: int, rng) -> np.ndarray:
    if size > 1:
        idx = rng.choice(points.shape[0], size=size, replace=False)
        points[idx] = points[idx[0]]
    return points


def duplicate_count(n: int, C: float) -> int:
    """Size ``ceil(sqrt(2 C n))`` of the collapsed set."""
    return math.ceil(math.sqrt(2.0 * C * n))


def gen_duplicate_instance(n: int, d: int, C: float, rng, bandwidth: float = 1.0) -> PointSet:
    """Far-apart points with ``ceil(sqrt(2Cn))`` of them collapsed onto one.

    The kernel sum is ``n + |dup| (|dup| - 1)``, about ``2Cn``.
    """
    if C < 0 or 2 * C * n > n * n:
        raise ValueError("need 0 <= 2Cn <= n^2")
    return PointSet(_collapse(gen_far_apart(n, d, rng, bandwidth), duplicate_count(n, C), rng))


def gen_clique_instance(n: int, d: int, copies: int, rng, bandwidth: float = 1.0) -> PointSet:
    """Far-apart points with ``copies`` of them identical; top eigenvalue ``copies``."""
    if not 1 <= copies <= n:
        raise ValueError("need 1 <= copies <= n")
    return PointSet(_collapse(gen_far_apart(n, d, rng, bandwidth), copies, rng))


def gen_mixture(n: int, d: int, rng, components: int = 4, spread: float = 1.0, scale: float = 0.3,
                weights=None) -> PointSet:
    """Gaussian mixture: centres ``N(0, spread^2)``, within-component sd ``scale``."""
    if n < 1 or d < 1 or components < 1:
        raise ValueError("need n, d, components >= 1")
    w = np.full(components, 1.0 / components) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (components,) or np.any(w < 0) or not w.sum() > 0:
        raise ValueError("weights must be non-negative, one per component")
    centres = rng.normal(scale=spread, size=(components, d))
    labels = rng.choice(components, size=n, p=w / w.sum())
    return PointSet(centres[labels] + rng.normal(scale=scale, size=(n, d)))


def gen_clustered(n: int, d: int, rng, cluster_sizes=(0.06, 0.03, 0.015), cluster_scale: float = 0.01,
                  background: float = 1.0) -> PointSet:
    """Tight clusters on a uniform background in ``[0, background]^d``.

    ``cluster_sizes`` are fractions of ``n``. With a small bandwidth the top
    eigenvector concentrates on the largest cluster, which is the regime
    where importance sampling by vector mass pays off.
    """
    counts = [int(round(f * n)) for f in cluster_sizes]
    rest = n - sum(counts)
    if rest < 0:
        raise ValueError("cluster fractions exceed one")
    parts = [rng.uniform(0.0, background, size=(rest, d))]
    for c in counts:
        centre = rng.uniform(0.0, background, size=d)
        parts.append(centre + rng.normal(scale=cluster_scale, size=(c, d)))
    pts = np.concatenate(parts)
    return PointSet(pts[rng.permutation(n)])
