"""Non-negative latent factorization of sparse 3-way tensors.

Models a dynamic network as an incomplete (source, target, time) tensor and
fits sigmoid-mapped CP factors with plain or momentum SGD.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (BoundsError, ConfigError, DataError, DivergenceError, EvaluationError,
                     ParseError, RangeError)
from .ingest import IngestManifest, RawRecord, bin_time, build_tensor, normalize_weight, parse_edge_list
from .metrics import ComparisonRow, EvalReport, compare_runs, evaluate, mae, rmse, synth_tensor
from .model import (FactorState, LossBreakdown, loss, point_gradient, predict, residual, sigmoid,
                    sigmoid_derivative)
from .solver import TrainConfig, TrainTrace, VelocityState, init_factors, msgd_step, sgd_step, train
from .tensor_store import (Entry, SparseTensorCOO, SplitAssignment, TensorShape, density,
                           insert_or_merge, split)
