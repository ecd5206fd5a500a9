"""NL-TISO: sparse online kernel estimation of non-linear VAR topologies.

Each node n keeps coefficients ``alpha[p, n', t]`` over the retained window
of center times. One time step

1. appends a zero coefficient column for the newest center (dropping the
   oldest column when the window is full),
2. takes a gradient step on the instantaneous squared loss, and
3. applies group soft-thresholding per (p, n') group, except on
   self-connections (n' == n), which are never shrunk.

The prediction used for the loss, and reported as the one-step-ahead
forecast, comes from the zero-extended state of the previous step.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .kernel import KernelSpec, KernelVector, kernel_block
from .timeseries import SeriesMatrix, WindowIndex


class AlignmentError(ValueError):
    """State and kernel vector do not describe the same window."""


class DivergenceError(FloatingPointError):
    """The online iterates left the finite range."""


@dataclass(frozen=True)
class Hyperparams:
    """Online estimator settings.

    lam : group-lasso weight (>= 0).
    gamma : step size (> 0).
    order : lag order P.
    window : number of retained centers T_w; None keeps all of them.
    step_bound : if set, the step actually taken at time t is
        ``min(gamma, step_bound / ||kappa_t||**2)``. A plain gradient step of
        that size removes the fraction ``step_bound`` of the current error,
        so values in (0, 2) keep the update stable. None uses ``gamma``
        unchanged at every step.
    """

    lam: float = 0.1
    gamma: float = 10.0
    order: int = 2
    window: Optional[int] = 2000
    step_bound: Optional[float] = 0.5

    def __post_init__(self):
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ValueError(f"lam must be finite and >= 0, got {self.lam}")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be finite and > 0, got {self.gamma}")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be an integer >= 1, got {self.order}")
        if self.window is not None and (int(self.window) != self.window or self.window < 1):
            raise ValueError(f"window must be an integer >= 1 or None, got {self.window}")
        if self.step_bound is not None and not self.step_bound > 0:
            raise ValueError(f"step_bound must be > 0 or None, got {self.step_bound}")


def bounded_step(h: Hyperparams, sq_norm: float) -> float:
    """Step size for a feature vector with squared norm ``sq_norm``."""
    if h.step_bound is None or sq_norm <= 0.0:
        return h.gamma
    return min(h.gamma, h.step_bound / sq_norm)


def step_size(h: Hyperparams, kappa: KernelVector) -> float:
    flat = kappa.flat
    return bounded_step(h, float(np.dot(flat, flat)))


@dataclass(frozen=True, eq=False)
class NodeState:
    """Coefficients of one target node.

    ``coeffs[p - 1, n', k]`` weighs the kernel centered at ``times[k]`` for
    source n' and lag p, so ``coeffs.reshape(-1)`` lines up with the
    flattened kernel vector.
    """

    node: int
    coeffs: np.ndarray
    times: tuple = ()

    @classmethod
    def empty(cls, node: int, n_nodes: int, order: int) -> "NodeState":
        return cls(node, np.zeros((order, n_nodes, 0)), ())

    @property
    def flat(self) -> np.ndarray:
        return self.coeffs.reshape(-1)

    @property
    def width(self) -> int:
        return self.coeffs.shape[2]

    def group(self, source: int, lag: int) -> np.ndarray:
        """Weights of the (source, lag) group along the window; lag is 1-based."""
        return self.coeffs[lag - 1, source]

    def group_norms(self) -> np.ndarray:
        """(N, P) array of l2 norms, entry [n', p - 1]."""
        return np.sqrt(np.sum(self.coeffs * self.coeffs, axis=-1)).T

    def extended(self, t: int, evicted: bool = False) -> "NodeState":
        """Append a zero column for center ``t``; drop the oldest column if evicted."""
        kept = self.coeffs[:, :, 1:] if evicted else self.coeffs
        n_lags, n_nodes, _ = kept.shape
        coeffs = np.concatenate((kept, np.zeros((n_lags, n_nodes, 1))), axis=-1)
        times = (self.times[1:] if evicted else self.times) + (int(t),)
        return NodeState(self.node, coeffs, times)


def _check_aligned(state: NodeState, kappa: KernelVector) -> None:
    if state.coeffs.shape != kappa.entries.shape:
        raise AlignmentError(
            f"state of node {state.node} has shape {state.coeffs.shape}, "
            f"kernel vector has shape {kappa.entries.shape}")
    if state.times and kappa.times and state.times != kappa.times:
        raise AlignmentError(f"state of node {state.node} and kernel vector use different windows")


def predict(state: NodeState, kappa: KernelVector) -> float:
    _check_aligned(state, kappa)
    return float(np.sum(state.coeffs * kappa.entries))


def instantaneous_loss(state: NodeState, kappa: KernelVector, y: float) -> float:
    r = y - predict(state, kappa)
    return 0.5 * r * r


def gradient(state: NodeState, kappa: KernelVector, y: float) -> np.ndarray:
    """Gradient of the instantaneous loss, shaped like the kernel vector entries."""
    return kappa.entries * (predict(state, kappa) - y)


def group_shrink(u, threshold):
    """Multidimensional shrinkage-thresholding ``u * [1 - threshold / ||u||]_+``.

    Groups run along the last axis of ``u``; ``threshold`` broadcasts against
    the remaining axes. Groups with norm at or below the threshold, including
    all-zero groups, map to exactly zero.
    """
    u = np.asarray(u, dtype=float)
    threshold = np.asarray(threshold, dtype=float)
    if np.any(threshold < 0):
        raise ValueError("threshold must be >= 0")
    norm = np.sqrt(np.sum(u * u, axis=-1))
    safe = np.where(norm > 0, norm, 1.0)
    factor = np.where(norm > threshold, 1.0 - threshold / safe, 0.0)
    return u * factor[..., None]


def cross_mask(node: int, n_nodes: int, order: int) -> np.ndarray:
    """(P, N) indicator of groups subject to shrinkage (source != node)."""
    mask = np.ones((order, n_nodes))
    mask[:, node] = 0.0
    return mask


def comid_step(state: NodeState, kappa: KernelVector, y: float, h: Hyperparams,
               step: Optional[float] = None) -> NodeState:
    """One composite-objective mirror descent update in closed form.

    ``state`` must already be zero-extended to the window of ``kappa``
    (see :meth:`NodeState.extended`). ``step`` overrides the step size,
    which otherwise comes from :func:`step_size`.
    """
    _check_aligned(state, kappa)
    gamma = step_size(h, kappa) if step is None else float(step)
    n_lags, n_nodes, _ = kappa.entries.shape
    u = state.coeffs - gamma * gradient(state, kappa, y)
    thresholds = gamma * h.lam * cross_mask(state.node, n_nodes, n_lags)
    return NodeState(state.node, group_shrink(u, thresholds), kappa.times)


def comid_objective(alpha, alpha_tilde, grad, step: float, lam: float, node: int) -> float:
    """Linearized loss + proximity + group penalty minimized by :func:`comid_step`.

    All arrays have shape (P, N, W).
    """
    alpha = np.asarray(alpha, dtype=float)
    diff = alpha - alpha_tilde
    norms = np.sqrt(np.sum(alpha * alpha, axis=-1))
    norms[:, node] = 0.0
    return float(np.sum(grad * diff) + np.sum(diff * diff) / (2.0 * step) + lam * np.sum(norms))


@dataclass
class StepRecord:
    """Per (t, node) trajectory record passed to sinks."""

    t: int
    node: int
    prediction: float
    ise: float
    group_norms: Optional[np.ndarray] = None


@dataclass
class OnlineResult:
    """Output of a full pass over a series.

    ``predictions`` and ``ise`` are N x T with NaN before the first
    predicted time. ``snapshots`` maps a time to its N x N x P adjacency
    estimate (group norms after the update at that time);
    ``mean_adjacency`` is the average estimate over the trailing steps
    requested from :func:`drive`.
    """

    states: list
    predictions: np.ndarray
    ise: np.ndarray
    start: int
    snapshots: dict = field(default_factory=dict)
    mean_adjacency: Optional[np.ndarray] = None

    @property
    def final_adjacency(self) -> np.ndarray:
        return np.stack([s.group_norms() for s in self.states])


class NLTISO:
    """Streaming NL-TISO estimator for N nodes.

    Feed one N-vector of samples per call to :meth:`update`. The first P
    calls only fill the lag buffer and return None; afterwards each call
    returns the one-step-ahead predictions made before learning from the
    sample.
    """

    def __init__(self, n_nodes: int, spec: KernelSpec, h: Hyperparams, threads: int = 1):
        if n_nodes < 1:
            raise ValueError("need at least one node")
        self.n_nodes = n_nodes
        self.spec = spec
        self.h = h
        self.threads = max(1, int(threads))
        self.window = WindowIndex(h.window)
        self.states = [NodeState.empty(n, n_nodes, h.order) for n in range(n_nodes)]
        self.t = 0
        # samples kept from absolute time self._base onwards
        self._buf = np.zeros((n_nodes, 64))
        self._base = 0
        self._len = 0
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _append(self, sample: np.ndarray) -> None:
        if self._len == self._buf.shape[1]:
            # keep what the oldest retained center still needs
            oldest = next(iter(self.window)) if len(self.window) else self.t
            keep_from = max(self._base, oldest - self.h.order)
            live = self._buf[:, keep_from - self._base:self._len]
            cap = max(64, 2 * (live.shape[1] + 1))
            buf = np.zeros((self.n_nodes, cap))
            buf[:, :live.shape[1]] = live
            self._buf, self._base, self._len = buf, keep_from, live.shape[1]
        self._buf[:, self._len] = sample
        self._len += 1

    def kernel_vector(self) -> KernelVector:
        """Kernel vector of the most recent sample against the retained centers."""
        tau = self.t - 1
        if tau < self.h.order:
            raise ValueError(f"no kernel vector before {self.h.order} lag samples are stored")
        times = self.window.as_array()
        entries = kernel_block(self._buf, tau, times, self.spec, self.h.order, base=self._base)
        return KernelVector(entries, self.window.retained_times, tau)

    def _update_node(self, args):
        state, kappa, y, gamma = args
        pred = predict(state, kappa)
        return pred, comid_step(state, kappa, y, self.h, step=gamma)

    def update(self, sample) -> Optional[np.ndarray]:
        sample = np.asarray(sample, dtype=float).reshape(-1)
        if sample.shape != (self.n_nodes,):
            raise ValueError(f"expected {self.n_nodes} samples, got {sample.shape}")
        if not np.all(np.isfinite(sample)):
            raise ValueError(f"non-finite sample at time {self.t}")
        t = self.t
        self._append(sample)
        self.t += 1
        if t < self.h.order:
            return None
        evicted = self.window.push(t) is not None
        states = [s.extended(t, evicted) for s in self.states]
        kappa = self.kernel_vector()
        gamma = step_size(self.h, kappa)
        jobs = [(s, kappa, sample[s.node], gamma) for s in states]
        if self._pool is None:
            out = [self._update_node(j) for j in jobs]
        else:
            out = list(self._pool.map(self._update_node, jobs))
        self.states = [o[1] for o in out]
        return np.array([o[0] for o in out])

    def adjacency(self) -> np.ndarray:
        """N x N x P group norms of the current coefficients."""
        return np.stack([s.group_norms() for s in self.states])


Sink = Callable[[StepRecord], None]


def drive(model, series: SeriesMatrix, sink: Optional[Sink] = None,
          snapshot_every: Optional[int] = None, average_last: Optional[int] = None) -> OnlineResult:
    """Replay ``series`` through a streaming model, one column at a time.

    ``average_last`` averages the adjacency estimate over the final K
    predicted steps (clipped to the number of predicted steps).
    """
    n_nodes, n_samples = series.values.shape
    predictions = np.full((n_nodes, n_samples), np.nan)
    ise = np.full((n_nodes, n_samples), np.nan)
    snapshots = {}
    avg_from = None
    if average_last:
        avg_from = max(n_samples - int(average_last), model.h.order)
    mean_adj = None
    for t in range(n_samples):
        pred = model.update(series.values[:, t])
        if pred is None:
            continue
        if not np.all(np.isfinite(pred)):
            raise DivergenceError(
                f"predictions became non-finite at t={t}; reduce gamma or set a step bound")
        err = series.values[:, t] - pred
        predictions[:, t] = pred
        ise[:, t] = err * err
        snap = None
        if snapshot_every and (t % snapshot_every == 0 or t == n_samples - 1):
            snap = model.adjacency()
            snapshots[t] = snap
        if avg_from is not None and t >= avg_from:
            adj = model.adjacency() if snap is None else snap
            mean_adj = adj.copy() if mean_adj is None else mean_adj + adj
        if sink is not None:
            for n in range(n_nodes):
                sink(StepRecord(t, n, float(pred[n]), float(ise[n, t]),
                                None if snap is None else snap[n]))
    if mean_adj is not None:
        mean_adj /= n_samples - avg_from
    return OnlineResult(list(model.states), predictions, ise, model.h.order, snapshots, mean_adj)


def run_online(series: SeriesMatrix, spec: KernelSpec, h: Hyperparams,
               sink: Optional[Sink] = None, snapshot_every: Optional[int] = None,
               threads: int = 1, average_last: Optional[int] = None) -> OnlineResult:
    """Run NL-TISO over a whole series with prequential evaluation.

    For each t >= P the kernel vector is built once, every node predicts
    y_n[t] from its previous state and is then updated with
    :func:`comid_step`. Results do not depend on ``threads``.
    """
    if series.n_samples <= h.order:
        raise ValueError(f"series has T={series.n_samples} samples; need more than P={h.order}")
    with NLTISO(series.n_nodes, spec, h, threads=threads) as model:
        return drive(model, series, sink, snapshot_every, average_last)
