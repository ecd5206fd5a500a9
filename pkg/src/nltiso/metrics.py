"""Error traces, adjacency extraction and support-recovery scores."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np


def ise(y: float, y_hat: float) -> float:
    """Instantaneous squared error."""
    d = y - y_hat
    return d * d


@dataclass(frozen=True, eq=False)
class AdjacencyEstimate:
    """N x N x P tensor of non-negative edge strengths at time ``t``.

    ``values[n, n', p - 1]`` is the strength of the lag-p link from n' to n.
    """

    values: np.ndarray
    t: Optional[int] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[0] != v.shape[1]:
            raise ValueError(f"adjacency must have shape (N, N, P), got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("adjacency entries must be finite and non-negative")
        object.__setattr__(self, "values", v)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def order(self) -> int:
        return self.values.shape[2]

    def stacked(self) -> np.ndarray:
        return stack_lags(self.values)


def adjacency_from_state(states: Iterable, t: Optional[int] = None) -> AdjacencyEstimate:
    """Group l2 norms of every node's coefficients arranged as an adjacency tensor.

    Works for any state exposing ``group_norms()`` returning an (N, P) array
    (kernel or linear).
    """
    rows = [s.group_norms() for s in sorted(states, key=lambda s: s.node)]
    return AdjacencyEstimate(np.stack(rows), t)


def normalize_adjacency(b: AdjacencyEstimate) -> AdjacencyEstimate:
    """Divide by the maximum entry; an all-zero estimate is returned unchanged."""
    peak = b.values.max()
    if peak <= 0:
        return b
    return AdjacencyEstimate(b.values / peak, b.t)


def stack_lags(values: np.ndarray) -> np.ndarray:
    """(N, N, P) -> (P*N, N): one N x N block per lag, stacked vertically."""
    values = np.asarray(values)
    n, _, p = values.shape
    return values.transpose(2, 0, 1).reshape(p * n, n)


def unstack_lags(matrix: np.ndarray) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    rows, n = matrix.shape
    if rows % n:
        raise ValueError(f"stacked adjacency with {rows} rows is not a multiple of N={n}")
    return matrix.reshape(rows // n, n, n).transpose(1, 2, 0)


@dataclass(frozen=True)
class SupportMetrics:
    precision: float
    recall: float
    edge_ratio: float
    k: int
    n_true: int

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall,
                "edge_ratio": self.edge_ratio, "k": self.k, "n_true": self.n_true}


def _cross(n: int, p: int) -> np.ndarray:
    return np.broadcast_to(~np.eye(n, dtype=bool)[:, :, None], (n, n, p))


def support_metrics(b, edge_mask, k: Optional[int] = None) -> SupportMetrics:
    """Score the top-k cross-node entries of ``b`` against a true edge mask.

    ``b`` is an AdjacencyEstimate or an (N, N, P) array; ``edge_mask`` a
    boolean (N, N, P) array or a TrueGraph. Self-connections are ignored.
    ``k`` defaults to the number of true cross-node edges. Ties in ``b`` are
    broken by position, first entry first.
    """
    values = b.values if isinstance(b, AdjacencyEstimate) else np.asarray(b, dtype=float)
    mask = getattr(edge_mask, "edge_mask", edge_mask)
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape:
        raise ValueError(f"estimate shape {values.shape} does not match truth shape {mask.shape}")
    cross = _cross(values.shape[0], values.shape[2])
    scores = values[cross]
    truth = mask[cross]
    n_true = int(truth.sum())
    if k is None:
        k = n_true
    if not 0 <= k <= scores.size:
        raise IndexError(f"k={k} outside 0..{scores.size} cross-node entries")
    top = np.argsort(-scores, kind="stable")[:k]
    hits = int(truth[top].sum())
    precision = hits / k if k else float("nan")
    recall = hits / n_true if n_true else float("nan")
    on = scores[truth].mean() if n_true else float("nan")
    off = scores[~truth].mean() if n_true < scores.size else float("nan")
    if off == 0:
        ratio = float("inf") if on > 0 else float("nan")
    else:
        ratio = float(on / off)
    return SupportMetrics(precision, recall, ratio, int(k), n_true)


def time_averaged_ise(trace, burn_in: int = 0) -> np.ndarray:
    """Mean ISE over ``t >= burn_in`` for each row of an (N, T) trace.

    NaN entries (times before the first prediction) are skipped. A 1-D
    trace gives a 0-d result.
    """
    trace = np.asarray(trace, dtype=float)
    length = trace.shape[-1]
    if not 0 <= burn_in < length:
        raise IndexError(f"burn_in={burn_in} leaves no samples in a trace of length {length}")
    return np.nanmean(trace[..., burn_in:], axis=-1)
