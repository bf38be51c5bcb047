"""Experiment runners and machine-readable result files.

Eigenvector runs follow a fixed protocol: after every iteration the current
iterate ``z`` is scored by ``1 - z^T K z / lambda_1`` using a separate
ground-truth oracle whose kernel evaluations are never charged to the method.
"""
from __future__ import annotations

import csv
import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .eigen import MvmConfig, full_power, knpm, uniform_noisy_power
from .kernels import Kernel, KernelSpec, _row_chunk, as_points, exact_mvm, exact_sum
from .sums import SamplerConfig, claim1_baseline, estimate_sum

METHODS = ("full", "uniform", "knpm")
# dense oracles up to this many entries (8 bytes each)
DENSE_LIMIT = 150_000_000


class StopRun(Exception):
    """Raised from an iteration callback to end a run early."""


@dataclass
class RunRecord:
    iter: int
    evals_cum: int
    rayleigh: float
    rel_err: float | None
    method: str
    seed: int


@dataclass
class SumRecord:
    method: str
    trials: int
    success_rate: float
    mean_points_sampled: float
    mean_evals: float
    exact: float
    eps: float
    delta: float
    seed: int


class GroundTruth:
    """Exact ``z^T K z`` and ``lambda_1`` with a private evaluation counter.

    Small matrices are materialised once; larger ones are multiplied
    blockwise on every call. ``lam1`` may be supplied to skip the
    eigenvalue computation.
    """

    def __init__(self, points, spec: KernelSpec, lam1: float | None = None, dense: bool | None = None):
        self.points = as_points(points)
        self.kernel = Kernel(spec)
        n = self.points.shape[0]
        if dense is None:
            dense = n * n <= DENSE_LIMIT
        self.matrix = None
        if dense:
            self.matrix = np.empty((n, n))
            step = _row_chunk(n)
            for a in range(0, n, step):
                self.matrix[a:a + step] = self.kernel.pairwise(self.points[a:a + step], self.points)
        self._lam1 = lam1

    def matvec(self, z) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ z
        return exact_mvm(self.points, self.kernel, z)

    def quadratic(self, z) -> float:
        z = np.asarray(z, dtype=np.float64)
        return float(z @ self.matvec(z))

    @property
    def lam1(self) -> float:
        if self._lam1 is None:
            n = self.points.shape[0]
            if n == 1:
                self._lam1 = 1.0
            elif self.matrix is not None and n <= 4:
                self._lam1 = float(np.linalg.eigvalsh(self.matrix)[-1])
            else:
                op = self.matrix if self.matrix is not None else LinearOperator((n, n), matvec=self.matvec, dtype=float)
                self._lam1 = float(eigsh(op, k=1, which="LA", tol=1e-12, v0=np.ones(n))[0][0])
        return self._lam1

    def rel_err(self, z) -> tuple[float, float]:
        """``(z^T K z, clip(1 - z^T K z / lambda_1, 0, 1))`` for a unit vector ``z``."""
        q = self.quadratic(z)
        return q, min(1.0, max(0.0, 1.0 - q / self.lam1))


@dataclass(frozen=True)
class Schedule:
    """Sampling schedule shared by the randomised methods.

    The rate at iteration ``i`` is ``rate0 * growth^i``. KNPM additionally
    uses ``eps_mvm`` for its bucket rounding and the uniform KDE backend.
    """

    rate0: float = 0.01
    growth: float = 1.1
    eps_mvm: float = 0.1
    backend: str = "uniform"


def method_rng(seed: int, method: str) -> np.random.Generator:
    """Independent stream per method, unaffected by which methods run."""
    return np.random.default_rng(np.random.SeedSequence([seed, METHODS.index(method)]))


def run_eig_experiment(points, spec: KernelSpec, methods=METHODS, iterations: int = 50,
                       schedule: Schedule | None = None, seed: int = 0, ground_truth=None,
                       target: float | None = None) -> list[RunRecord]:
    """Per-iteration accuracy traces for the requested power methods.

    ``ground_truth`` is a :class:`GroundTruth` or a precomputed ``lambda_1``;
    by default one is built from the points. With ``target`` set a method
    stops at the first iteration whose relative error reaches it.
    """
    schedule = schedule or Schedule()
    X = as_points(points)
    if isinstance(ground_truth, GroundTruth):
        truth = ground_truth
    else:
        truth = GroundTruth(X, spec, lam1=ground_truth)
    records = []
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        kernel = Kernel(spec)
        rng = method_rng(seed, method)
        trace = []

        def callback(i, z, y, method=method, kernel=kernel, trace=trace):
            znext = y / np.linalg.norm(y)
            q, err = truth.rel_err(znext)
            trace.append(RunRecord(i + 1, kernel.evals, q, err, method, seed))
            if target is not None and err <= target:
                raise StopRun

        try:
            if method == "full":
                full_power(X, kernel, iterations, callback)
            elif method == "uniform":
                uniform_noisy_power(X, kernel, iterations, schedule.rate0, schedule.growth, rng, callback)
            else:
                cfg = MvmConfig(eps_mvm=schedule.eps_mvm, backend=schedule.backend)
                knpm(X, kernel, 0.5, cfg, rng, iterations=iterations, rate0=schedule.rate0,
                     growth=schedule.growth, callback=callback)
        except StopRun:
            pass
        records.extend(trace)
    return records


def evals_to_reach(records, method: str, target: float) -> int | None:
    """Cumulative evaluations at the first iteration with ``rel_err <= target``."""
    for r in records:
        if r.method == method and r.rel_err is not None and r.rel_err <= target:
            return r.evals_cum
    return None


def run_sum_experiment(points, spec: KernelSpec, eps: float, delta: float, trials: int, seed: int = 0,
                       exact: float | None = None, cfg: SamplerConfig | None = None) -> list[SumRecord]:
    """Success rate and sampling cost of the sum estimator and the entry-sampling baseline."""
    X = as_points(points)
    if exact is None:
        exact = exact_sum(X, Kernel(spec))
    out = []
    for method in ("estimate_sum", "claim1"):
        hits, sampled, evals = 0, 0, 0
        for t in range(trials):
            rng = np.random.default_rng(np.random.SeedSequence([seed, t]))
            kernel = Kernel(spec)
            if method == "estimate_sum":
                est = estimate_sum(X, kernel, eps, delta, cfg, rng)
            else:
                est = claim1_baseline(X, kernel, eps, delta, rng)
            hits += int(abs(est.value - exact) <= eps * exact)
            sampled += est.points_sampled
            evals += est.evals
        out.append(SumRecord(method, trials, hits / trials, sampled / trials, evals / trials, float(exact),
                             eps, delta, seed))
    return out


def _to_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def emit(records, path, format: str = "csv", record_type=RunRecord) -> None:
    """Write records one per row (csv with header) or line (json-lines).

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        write_records(records, path, format, record_type)
        return
    with Path(path).open("w", newline="") as fh:
        write_records(records, fh, format, record_type)


def write_records(records, fh, format: str = "csv", record_type=RunRecord) -> None:
    names = [f.name for f in dataclasses.fields(record_type)]
    if format == "csv":
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for r in records:
            writer.writerow([_to_text(getattr(r, k)) for k in names])
    elif format in ("jsonl", "json-lines"):
        for r in records:
            fh.write(json.dumps({k: getattr(r, k) for k in names}) + "\n")
    else:
        raise ValueError(f"unknown format {format!r}")


def _from_text(text: str, tp):
    if text == "":
        return None
    if "int" in tp:
        return int(text)
    if "float" in tp:
        return float(text)
    return text


def read_records(path, format: str = "csv", record_type=RunRecord) -> list:
    """Inverse of :func:`emit`."""
    path = Path(path)
    fields = [(f.name, str(f.type)) for f in dataclasses.fields(record_type)]
    if format == "csv":
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        return [record_type(**{k: _from_text(row[k], tp) for k, tp in fields}) for row in rows]
    if format in ("jsonl", "json-lines"):
        with path.open() as fh:
            return [record_type(**json.loads(line)) for line in fh if line.strip()]
    raise ValueError(f"unknown format {format!r}")
