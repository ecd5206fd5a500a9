"""Sample containers, lag access and the sliding window of retained times.

Time indices are 0-based integers. Node indices are 0-based; lags run
from 1 to P.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np


class OrderingError(ValueError):
    """Raised when a time index is pushed out of order."""


@dataclass(frozen=True)
class Scaling:
    """Per-row affine map applied by standardization: ``z = (x - mean) / scale``."""

    mean: np.ndarray
    scale: np.ndarray


@dataclass(frozen=True, eq=False)
class SeriesMatrix:
    """Immutable N x T record of observed samples ``values[n, t]``.

    ``scaling`` is set when the values are a standardized version of some
    raw table, so the original units can be recovered.
    """

    values: np.ndarray
    node_ids: tuple = ()
    scaling: Optional[Scaling] = field(default=None, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2:
            raise ValueError(f"series must be 2-D (nodes x time), got shape {values.shape}")
        n_nodes, n_samples = values.shape
        if n_nodes < 1 or n_samples < 1:
            raise ValueError(f"series needs at least one node and one sample, got {values.shape}")
        if not np.all(np.isfinite(values)):
            bad = np.argwhere(~np.isfinite(values))[0]
            raise ValueError(f"non-finite sample at node {bad[0]}, time {bad[1]}")
        values.setflags(write=False)
        node_ids = tuple(str(i) for i in self.node_ids) if len(self.node_ids) else tuple(
            f"y{n}" for n in range(n_nodes))
        if len(node_ids) != n_nodes:
            raise ValueError(f"{len(node_ids)} node ids given for {n_nodes} nodes")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "node_ids", node_ids)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.n_samples

    def column(self, t: int) -> np.ndarray:
        """All node samples at time ``t``."""
        return self.values[:, t]


@dataclass(frozen=True)
class LagView:
    """Lagged samples seen from time ``tau``: ``view[n, p] == y_n[tau - p]``."""

    origin: SeriesMatrix
    tau: int
    order: int

    def __getitem__(self, key):
        source, lag = key
        if not 1 <= lag <= self.order:
            raise IndexError(f"lag {lag} outside 1..{self.order}")
        return self.origin.values[source, self.tau - lag]

    def as_array(self) -> np.ndarray:
        """Lagged samples as a (P, N) array, row ``p - 1`` holding lag ``p``."""
        lags = self.tau - np.arange(1, self.order + 1)
        return self.origin.values[:, lags].T.copy()


def lag_view(series: SeriesMatrix, tau: int, order: int) -> LagView:
    """Return the P lagged samples of every node as seen from time ``tau``."""
    if order < 1:
        raise ValueError(f"lag order must be >= 1, got {order}")
    if not order <= tau < series.n_samples:
        raise IndexError(
            f"time index tau={tau} invalid for lag order P={order} and T={series.n_samples} "
            f"(need P <= tau < T)")
    return LagView(series, int(tau), int(order))


class WindowIndex:
    """FIFO of the most recent sample times, bounded by ``capacity``.

    ``capacity=None`` keeps every time (unbounded window).
    """

    def __init__(self, capacity: Optional[int] = None, times: Iterable[int] = ()):
        if capacity is not None and capacity < 1:
            raise ValueError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._times: deque = deque()
        for t in times:
            self.push(t)

    def push(self, t: int) -> Optional[int]:
        """Append ``t``; return the evicted time, or None when nothing was dropped."""
        t = int(t)
        if self._times and t <= self._times[-1]:
            raise OrderingError(f"time {t} pushed after {self._times[-1]}; times must increase")
        self._times.append(t)
        if self.capacity is not None and len(self._times) > self.capacity:
            return self._times.popleft()
        return None

    @property
    def retained_times(self) -> tuple:
        return tuple(self._times)

    def as_array(self) -> np.ndarray:
        return np.fromiter(self._times, dtype=np.int64, count=len(self._times))

    def __len__(self) -> int:
        return len(self._times)

    def __iter__(self):
        return iter(self._times)

    def __repr__(self) -> str:
        return f"WindowIndex(capacity={self.capacity}, retained={len(self)})"


def push_time(window: WindowIndex, t: int) -> Optional[int]:
    """Push ``t`` onto ``window`` in place and return the evicted time (or None)."""
    return window.push(t)


def as_series(values, node_ids: Sequence[str] = ()) -> SeriesMatrix:
    if isinstance(values, SeriesMatrix):
        return values
    return SeriesMatrix(np.asarray(values, dtype=float), tuple(node_ids))
