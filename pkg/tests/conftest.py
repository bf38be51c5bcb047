import math

import numpy as np
import pytest

from kdematrix import KernelSpec


def kernel_value(spec: KernelSpec, x, y) -> float:
    """Scalar reference kernel written out from the definitions."""
    diff = [a - b for a, b in zip(x, y)]
    if spec.family == "gaussian":
        return math.exp(-sum(t * t for t in diff) / spec.bandwidth**2)
    if spec.family == "exponential":
        return math.exp(-math.sqrt(sum(t * t for t in diff)) / spec.bandwidth)
    if spec.family == "laplacian":
        return math.exp(-sum(abs(t) for t in diff) / spec.bandwidth)
    return (1.0 + sum(t * t for t in diff) / spec.bandwidth**2) ** (-spec.beta)


def brute_matrix(spec: KernelSpec, X) -> np.ndarray:
    """Kernel matrix by a plain double loop."""
    X = np.asarray(X, dtype=float).reshape(len(X), -1)
    n = len(X)
    K = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            K[i, j] = kernel_value(spec, X[i], X[j])
    return K


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ALL_SPECS = [
    KernelSpec("gaussian", 0.8),
    KernelSpec("exponential", 1.3),
    KernelSpec("laplacian", 0.5),
    KernelSpec("rational_quadratic", 0.7, beta=2.5),
]


ACCEPTANCE_LINES = []


def report_criterion(number: int, passed: bool, detail: str) -> None:
    """Record one acceptance verdict; all verdicts are repeated in the terminal summary."""
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
