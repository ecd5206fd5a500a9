"""Synthetic graph-connected time series with known topology.

Two generators are provided:

* :func:`gen_stationary` draws a sparse adjacency tensor and, per active
  edge, a fixed Gaussian-kernel expansion as the link function.
* :func:`gen_timevarying` lets the adjacency drift sinusoidally and uses
  :func:`sine_nonlinearity` on every edge.

Adjacency tensors have shape (N, N, P); entry ``[n, n', p - 1]`` is the
weight of node n' at lag p on target n.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np

from .timeseries import SeriesMatrix


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GenConfig:
    n_nodes: int = 5
    n_samples: int = 3000
    order: int = 2
    edge_prob: float = 0.1
    adjacency_mean: float = 8.0
    adjacency_var: float = 3.0
    beta_var: float = 0.03
    gen_kernel_var: float = 0.03
    noise_var: float = 0.01
    init_var: float = 0.1
    n_centers: int = 10
    center_var: float = 1.0
    drift_amplitude: float = 0.01
    drift_frequency: float = 0.03
    tv_init: str = "full"  # "full" or "sparse"
    tv_init_var: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 1 or self.order < 1 or self.n_samples <= self.order:
            raise ConfigError(
                f"need N >= 1, P >= 1 and T > P; got N={self.n_nodes}, P={self.order}, "
                f"T={self.n_samples}")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ConfigError(f"edge_prob must lie in [0, 1], got {self.edge_prob}")
        for name in ("adjacency_var", "beta_var", "gen_kernel_var", "noise_var", "init_var",
                     "center_var", "tv_init_var"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        if self.n_centers < 1:
            raise ConfigError(f"n_centers must be >= 1, got {self.n_centers}")
        if self.tv_init not in ("full", "sparse"):
            raise ConfigError(f"tv_init must be 'full' or 'sparse', got {self.tv_init!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(eq=False)
class TrueGraph:
    """Ground truth behind a generated series.

    ``centers`` and ``beta`` (shape N x N x P x M) describe the kernel link
    functions and are None for sine-mode data.
    """

    adjacency: np.ndarray
    edge_mask: np.ndarray
    seed: int
    centers: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    config: dict = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[0]

    def cross_edge_count(self) -> int:
        off = ~np.eye(self.n_nodes, dtype=bool)[:, :, None]
        return int(np.sum(self.edge_mask & off))


def _node_ids(n: int):
    return tuple(f"y{i}" for i in range(n))


def gen_stationary(cfg: GenConfig) -> Tuple[SeriesMatrix, TrueGraph]:
    """Stationary non-linear VAR with Gaussian-kernel link functions."""
    rng = np.random.default_rng(cfg.seed)
    N, P, M, T = cfg.n_nodes, cfg.order, cfg.n_centers, cfg.n_samples
    mask = rng.random((N, N, P)) < cfg.edge_prob
    weights = rng.normal(cfg.adjacency_mean, math.sqrt(cfg.adjacency_var), (N, N, P))
    adjacency = np.where(mask, weights, 0.0)
    centers = rng.normal(0.0, math.sqrt(cfg.center_var), (N, N, P, M))
    beta = rng.normal(0.0, math.sqrt(cfg.beta_var), (N, N, P, M))
    init = rng.normal(0.0, math.sqrt(cfg.init_var), (N, P))
    noise = rng.normal(0.0, math.sqrt(cfg.noise_var), (N, T))

    y = np.zeros((N, T))
    y[:, :P] = init
    # link coefficients folded into the expansion weights; inactive edges vanish
    coef = adjacency[..., None] * beta
    lags = np.arange(1, P + 1)
    for t in range(P, T):
        x = y[:, t - lags]  # (N', P)
        d = x[None, :, :, None] - centers
        k = np.exp(-(d * d) / (2.0 * cfg.gen_kernel_var))
        y[:, t] = np.sum(coef * k, axis=(1, 2, 3)) + noise[:, t]

    truth = TrueGraph(adjacency, mask, cfg.seed, centers, beta, cfg.to_dict())
    return SeriesMatrix(y, _node_ids(N)), truth


def sine_nonlinearity(x):
    """``0.4 sin(pi x^2) + 0.3 sin(2 pi x) + 0.3 sin(3 pi x)``; works on scalars and arrays."""
    return (0.4 * np.sin(np.pi * x * x) + 0.3 * np.sin(2.0 * np.pi * x)
            + 0.3 * np.sin(3.0 * np.pi * x))


def drift_adjacency(a, t: int, amplitude: float = 0.01, frequency: float = 0.03,
                    mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Add ``amplitude * sin(frequency * t)`` to every active entry of ``a``.

    Active entries are those selected by ``mask``, or the nonzero ones when
    no mask is given. Inactive entries are returned as exact zeros.
    """
    a = np.asarray(a, dtype=float)
    if mask is None:
        mask = a != 0
    return np.where(mask, a + amplitude * math.sin(frequency * t), 0.0)


def gen_timevarying(cfg: GenConfig) -> Tuple[SeriesMatrix, np.ndarray, TrueGraph]:
    """Non-linear VAR with sinusoidally drifting adjacency and sine link functions.

    Returns the series, the adjacency trajectory (T x N x N x P, slice t is
    the adjacency that generated sample t) and a TrueGraph holding the
    initial adjacency and edge mask.
    """
    rng = np.random.default_rng(cfg.seed)
    N, P, T = cfg.n_nodes, cfg.order, cfg.n_samples
    if cfg.tv_init == "full":
        mask = np.ones((N, N, P), dtype=bool)
    else:
        mask = rng.random((N, N, P)) < cfg.edge_prob
    a = np.where(mask, rng.normal(0.0, math.sqrt(cfg.tv_init_var), (N, N, P)), 0.0)
    init = rng.normal(0.0, math.sqrt(cfg.init_var), (N, P))
    noise = rng.normal(0.0, math.sqrt(cfg.noise_var), (N, T))

    truth = TrueGraph(a.copy(), mask, cfg.seed, config=cfg.to_dict())
    trajectory = np.empty((T, N, N, P))
    y = np.zeros((N, T))
    y[:, :P] = init
    lags = np.arange(1, P + 1)
    for t in range(T):
        trajectory[t] = a
        if t >= P:
            f = sine_nonlinearity(y[:, t - lags])  # (N', P)
            y[:, t] = np.sum(a * f[None, :, :], axis=(1, 2)) + noise[:, t]
        a = drift_adjacency(a, t, cfg.drift_amplitude, cfg.drift_frequency, mask)
    return SeriesMatrix(y, _node_ids(N)), trajectory, truth
