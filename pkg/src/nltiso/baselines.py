"""Linear COMID baseline in the style of TIRSO.

Features are the raw lagged samples ``y_{n'}[tau - p]``; each (n, n')
pair owns one group spanning all P lags. The update is the same gradient
step plus group shrinkage as the kernel estimator, sharing
:func:`nltiso.estimator.group_shrink`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .estimator import AlignmentError, Hyperparams, Sink, bounded_step, drive, group_shrink
from .timeseries import SeriesMatrix, lag_view


@dataclass(frozen=True, eq=False)
class LinearNodeState:
    """Linear weights of one target node; ``weights[p - 1, n']``."""

    node: int
    weights: np.ndarray

    @classmethod
    def empty(cls, node: int, n_nodes: int, order: int) -> "LinearNodeState":
        return cls(node, np.zeros((order, n_nodes)))

    def group_norms(self) -> np.ndarray:
        """(N, P) array of |weight| per (source, lag), matching the kernel estimator layout."""
        return np.abs(self.weights).T


def linear_feature_vector(series: SeriesMatrix, tau: int, order: int) -> np.ndarray:
    """Lagged samples ordered by (p, n'), length N * P."""
    return lag_view(series, tau, order).as_array().reshape(-1)


def tirso_step(state: LinearNodeState, features, y: float, h: Hyperparams,
               step: Optional[float] = None) -> LinearNodeState:
    x = np.asarray(features, dtype=float).reshape(-1)
    if x.size != state.weights.size:
        raise AlignmentError(f"{x.size} features for {state.weights.size} weights")
    x = x.reshape(state.weights.shape)
    flat = x.reshape(-1)
    gamma = bounded_step(h, float(np.dot(flat, flat))) if step is None else step
    err = float(np.sum(state.weights * x)) - y
    u = (state.weights - gamma * err * x).T  # groups over lags: (N, P)
    thresholds = np.full(u.shape[0], gamma * h.lam)
    thresholds[state.node] = 0.0
    return LinearNodeState(state.node, group_shrink(u, thresholds).T)


class TIRSO:
    """Streaming linear baseline with the same interface as :class:`nltiso.estimator.NLTISO`."""

    def __init__(self, n_nodes: int, h: Hyperparams):
        self.n_nodes = n_nodes
        self.h = h
        self.states = [LinearNodeState.empty(n, n_nodes, h.order) for n in range(n_nodes)]
        self._lags: deque = deque(maxlen=h.order)
        self.t = 0

    def update(self, sample) -> Optional[np.ndarray]:
        sample = np.asarray(sample, dtype=float).reshape(-1)
        if sample.shape != (self.n_nodes,):
            raise ValueError(f"expected {self.n_nodes} samples, got {sample.shape}")
        out = None
        if len(self._lags) == self.h.order:
            x = np.stack(list(self._lags)[::-1])  # row p-1 holds lag p
            out = np.array([float(np.sum(s.weights * x)) for s in self.states])
            self.states = [tirso_step(s, x, sample[s.node], self.h) for s in self.states]
        self._lags.append(sample)
        self.t += 1
        return out

    def adjacency(self) -> np.ndarray:
        return np.stack([s.group_norms() for s in self.states])


def run_tirso(series: SeriesMatrix, h: Hyperparams, sink: Optional[Sink] = None,
              snapshot_every: Optional[int] = None, average_last: Optional[int] = None):
    """Linear counterpart of :func:`nltiso.estimator.run_online`; same result type."""
    if series.n_samples <= h.order:
        raise ValueError(f"series has T={series.n_samples} samples; need more than P={h.order}")
    return drive(TIRSO(series.n_nodes, h), series, sink, snapshot_every, average_last)
