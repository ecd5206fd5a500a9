"""Gaussian kernel evaluation and the stacked kernel vector.

The kernel vector at time ``tau`` holds, for every lag p, source node n'
and retained center time t, the similarity between ``y_{n'}[tau - p]``
and ``y_{n'}[t - p]``. Entries are laid out lexicographically in
(p, n', t), which is C order for an array of shape (P, N, W).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .timeseries import SeriesMatrix, WindowIndex

KERNEL_KINDS = ("gaussian",)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth.

    The Gaussian kernel is ``exp(-(x - x')**2 / (2 * variance))``.
    """

    variance: float = 0.1
    kind: str = "gaussian"

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unsupported kernel kind {self.kind!r}; choose from {KERNEL_KINDS}")
        if not (math.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"kernel variance must be positive and finite, got {self.variance}")


def kernel_eval(spec: KernelSpec, x: float, x_prime: float) -> float:
    d = float(x) - float(x_prime)
    return math.exp(-(d * d) / (2.0 * spec.variance))


def gaussian_kernel(x, centers, variance):
    """Vectorized Gaussian kernel; broadcasts ``x`` against ``centers``."""
    d = np.subtract(x, centers)
    return np.exp(-(d * d) / (2.0 * variance))


@dataclass(frozen=True, eq=False)
class KernelVector:
    """Stacked kernel similarities for one time step.

    ``entries`` has shape (P, N, W); ``times`` are the retained center
    times, aligned with the last axis.
    """

    entries: np.ndarray
    times: tuple
    tau: int = -1

    @property
    def shape(self):
        return self.entries.shape

    @property
    def width(self) -> int:
        return self.entries.shape[2]

    @property
    def flat(self) -> np.ndarray:
        return self.entries.reshape(-1)

    def __len__(self) -> int:
        return self.entries.size

    def flat_index(self, lag: int, source: int, rank: int) -> int:
        """Position of entry (lag, source, rank) in the flattened vector; lags are 1-based."""
        n_lags, n_nodes, width = self.entries.shape
        return ((lag - 1) * n_nodes + source) * width + rank

    def unflatten(self, index: int):
        n_lags, n_nodes, width = self.entries.shape
        block, rank = divmod(int(index), width)
        lag0, source = divmod(block, n_nodes)
        return lag0 + 1, source, rank


def kernel_block(values: np.ndarray, tau: int, times: np.ndarray, spec: KernelSpec,
                 order: int, base: int = 0) -> np.ndarray:
    """(P, N, W) kernel block from a raw sample buffer.

    ``values[:, j]`` holds the samples at absolute time ``base + j``.
    """
    lags = np.arange(1, order + 1)
    current = values[:, tau - lags - base].T  # (P, N)
    centers = values[:, times[None, :] - lags[:, None] - base]  # (N, P, W)
    centers = centers.transpose(1, 0, 2)
    return gaussian_kernel(current[:, :, None], centers, spec.variance)


def build_kernel_vector(series: SeriesMatrix, tau: int, window: WindowIndex | Sequence[int],
                        spec: KernelSpec, order: int) -> KernelVector:
    """Kernel vector between the lags of time ``tau`` and every retained center."""
    times = window.as_array() if isinstance(window, WindowIndex) else np.asarray(window, dtype=np.int64)
    if not order <= tau < series.n_samples:
        raise IndexError(f"tau={tau} invalid for P={order}, T={series.n_samples}")
    if times.size:
        if times.min() < order or times.max() >= series.n_samples:
            raise ValueError(
                f"window times span [{times.min()}, {times.max()}] but centers need "
                f"{order} <= t < {series.n_samples}")
    entries = kernel_block(series.values, int(tau), times, spec, order)
    return KernelVector(entries, tuple(int(t) for t in times), int(tau))
