"""Kernel matrix sums and top eigenvectors via fast kernel density evaluation."""
from .kernels import (
    ConvergenceError,
    EvalCounter,
    Kernel,
    KernelSpec,
    PointSet,
    exact_mvm,
    exact_row_sums,
    exact_sum,
    exact_top_eig,
    kernel_eval,
)

from .datasets import DatasetSource, load_dataset
from .eigen import EigResult, MvmConfig, full_power, knpm, nonneg_approx_mvm, uniform_noisy_power
from .exclusion import DyadicExclusionIndex
from .kde import KdeConfig, kde_build, kde_query
from .sums import SamplerConfig, SumEstimate, claim1_baseline, estimate_sum, kernel_alignment

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DatasetSource",
    "DyadicExclusionIndex",
    "EigResult",
    "EvalCounter",
    "KdeConfig",
    "Kernel",
    "KernelSpec",
    "MvmConfig",
    "PointSet",
    "SamplerConfig",
    "SumEstimate",
    "claim1_baseline",
    "estimate_sum",
    "exact_mvm",
    "exact_row_sums",
    "exact_sum",
    "exact_top_eig",
    "full_power",
    "kde_build",
    "kde_query",
    "kernel_alignment",
    "kernel_eval",
    "knpm",
    "load_dataset",
    "nonneg_approx_mvm",
    "uniform_noisy_power",
]
