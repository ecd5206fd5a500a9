"""Online non-linear topology identification for graph-connected time series."""

__version__ = "0.1.0"

from .baselines import TIRSO, LinearNodeState, linear_feature_vector, run_tirso, tirso_step
from .estimator import (NLTISO, AlignmentError, DivergenceError, Hyperparams, NodeState,
                        OnlineResult, StepRecord, comid_step, gradient, group_shrink,
                        instantaneous_loss, predict, run_online)
from .kernel import KernelSpec, KernelVector, build_kernel_vector, kernel_eval
from .metrics import (AdjacencyEstimate, adjacency_from_state, ise, normalize_adjacency,
                      support_metrics, time_averaged_ise)
from .synthgen import (GenConfig, TrueGraph, drift_adjacency, gen_stationary, gen_timevarying,
                       sine_nonlinearity)
from .timeseries import LagView, SeriesMatrix, WindowIndex, lag_view, push_time
