"""Per-entry SGD and momentum SGD training with validation early stopping."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, NamedTuple

import numpy as np

from . import _backend
from .errors import ConfigError, DivergenceError, ParseError
from .model import REG_MODES, FactorState
from .tensor_store import Entry, SparseTensorCOO, SplitAssignment, TensorShape, _check_seed

log = logging.getLogger(__name__)

INIT_STREAM = 0x1A17
SHUFFLE_STREAM = 0x5F1E
METHODS = ("msgd", "sgd")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run.

    ``gamma = 0`` turns momentum SGD into plain SGD exactly.  ``min_delta``
    is the absolute validation-RMSE improvement that resets the patience
    counter.
    """

    rank: int = 20
    eta: float = 0.01
    lam: float = 0.01
    gamma: float = 0.9
    max_epochs: int = 1000
    patience: int = 10
    seed: int = 0
    reg_mode: str = "eq6-exact"
    init_scale: float = 0.1
    min_delta: float = 1e-5

    def __post_init__(self):
        if int(self.rank) != self.rank or self.rank < 1:
            raise ConfigError(f"rank must be an integer >= 1, got {self.rank}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ConfigError(f"eta must be > 0, got {self.eta}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")
        if not 0 <= self.gamma < 1:
            raise ConfigError(f"gamma must lie in [0, 1), got {self.gamma}")
        if int(self.max_epochs) != self.max_epochs or self.max_epochs < 1:
            raise ConfigError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if int(self.patience) != self.patience or self.patience < 1:
            raise ConfigError(f"patience must be >= 1, got {self.patience}")
        _check_seed(self.seed)
        if self.reg_mode not in REG_MODES:
            raise ConfigError(f"reg_mode must be one of {REG_MODES}, got {self.reg_mode!r}")
        if not (self.init_scale > 0 and math.isfinite(self.init_scale)):
            raise ConfigError(f"init_scale must be > 0, got {self.init_scale}")
        if not self.min_delta >= 0:
            raise ConfigError(f"min_delta must be >= 0, got {self.min_delta}")

    def replace(self, **changes) -> "TrainConfig":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class VelocityState:
    v_i: np.ndarray
    v_j: np.ndarray
    v_k: np.ndarray

    @classmethod
    def zeros_like(cls, state: FactorState) -> "VelocityState":
        return cls(*(np.zeros_like(t) for t in state.tables))

    @property
    def tables(self):
        return (self.v_i, self.v_j, self.v_k)

    def copy(self) -> "VelocityState":
        return VelocityState(self.v_i.copy(), self.v_j.copy(), self.v_k.copy())


class EpochRecord(NamedTuple):
    epoch: int
    train_loss: float
    val_rmse: float


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_validation_rmse: float = math.inf
    stopped_reason: str = ""

    @property
    def epochs(self) -> int:
        return len(self.records)

    def val_rmse(self) -> np.ndarray:
        return np.array([r.val_rmse for r in self.records])

    def val_rmse_at(self, epoch: int) -> float:
        return self.records[epoch - 1].val_rmse

    def __eq__(self, other):
        if not isinstance(other, TrainTrace):
            return NotImplemented
        return (self.records == other.records and self.best_epoch == other.best_epoch
                and self.best_validation_rmse == other.best_validation_rmse
                and self.stopped_reason == other.stopped_reason)


def init_factors(shape, config: TrainConfig) -> FactorState:
    """Uniform draws on [-init_scale, init_scale], seeded by ``config.seed``."""
    di, dj, dk = shape
    rng = np.random.default_rng([INIT_STREAM, config.seed])
    s = config.init_scale
    return FactorState(
        rng.uniform(-s, s, (di, config.rank)),
        rng.uniform(-s, s, (dj, config.rank)),
        rng.uniform(-s, s, (dk, config.rank)),
        seed=config.seed,
    )


def epoch_order(n: int, seed: int, epoch: int) -> np.ndarray:
    """Visiting order of the training entries for one epoch."""
    return np.random.default_rng([SHUFFLE_STREAM, seed, epoch]).permutation(n).astype(np.int64)


def _single(entry):
    return (np.array([entry[:3]], dtype=np.int64),
            np.array([entry[3]], dtype=np.float64),
            np.zeros(1, dtype=np.int64))


def sgd_step(state: FactorState, entry: Entry, config: TrainConfig, backend=None) -> FactorState:
    """One plain SGD update on a single entry; returns a new state."""
    out = state.copy()
    idx, vals, order = _single(entry)
    k = _backend.get_kernels(backend)
    failed = k.sgd_epoch(*out.tables, idx, vals, order, config.eta, config.lam,
                         config.reg_mode == "raw-y")
    if failed >= 0:
        raise DivergenceError(f"non-finite update on entry {tuple(entry)}", entry=tuple(entry))
    return out


def msgd_step(state: FactorState, velocity: VelocityState, entry: Entry, config: TrainConfig,
              backend=None) -> tuple[FactorState, VelocityState]:
    """One momentum SGD update on a single entry; returns new state and velocity."""
    out, vel = state.copy(), velocity.copy()
    idx, vals, order = _single(entry)
    k = _backend.get_kernels(backend)
    failed = k.msgd_epoch(*out.tables, *vel.tables, idx, vals, order, config.eta, config.lam,
                          config.gamma, config.reg_mode == "raw-y")
    if failed >= 0:
        raise DivergenceError(f"non-finite update on entry {tuple(entry)}", entry=tuple(entry))
    return out, vel


def train(tensor: SparseTensorCOO, split: SplitAssignment, config: TrainConfig, *,
          method: str = "msgd", backend=None,
          on_epoch: Callable[[int, FactorState], None] | None = None):
    """Fit factors on the training split, tracking validation RMSE per epoch.

    Parameters
    ----------
    tensor : SparseTensorCOO
    split : SplitAssignment
        Entry positions of ``tensor`` for training and validation; the test
        block is not touched.
    config : TrainConfig
    method : {"msgd", "sgd"}
        ``"sgd"`` runs the plain update rule and ignores ``config.gamma``.
    backend : str, optional
        Kernel backend name; defaults to the import-time choice.
    on_epoch : callable, optional
        Called as ``on_epoch(epoch, state)`` after each epoch with the live
        state.  Must not modify it.

    Returns
    -------
    best : FactorState
        Snapshot taken at the epoch with the lowest validation RMSE.
    trace : TrainTrace
    """
    if method not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    if len(split.train) == 0 or len(split.validation) == 0:
        raise ConfigError("training and validation splits must be non-empty")
    k = _backend.get_kernels(backend)
    tr_idx, tr_val = tensor.subset(split.train)
    va_idx, va_val = tensor.subset(split.validation)
    raw_y = config.reg_mode == "raw-y"

    state = init_factors(tensor.shape, config)
    velocity = VelocityState.zeros_like(state)
    trace = TrainTrace()
    best = state.copy()
    patience_ref = math.inf
    stale = 0

    for epoch in range(1, config.max_epochs + 1):
        order = epoch_order(len(tr_val), config.seed, epoch)
        if method == "sgd":
            failed = k.sgd_epoch(*state.tables, tr_idx, tr_val, order, config.eta, config.lam, raw_y)
        else:
            failed = k.msgd_epoch(*state.tables, *velocity.tables, tr_idx, tr_val, order,
                                  config.eta, config.lam, config.gamma, raw_y)
        if failed >= 0:
            n = order[failed]
            entry = (*tr_idx[n].tolist(), float(tr_val[n]))
            raise DivergenceError(
                f"non-finite parameter after updating entry {entry} in epoch {epoch} "
                f"(eta={config.eta}, gamma={config.gamma})", entry=entry, epoch=epoch)

        data, reg = k.loss_terms(*state.tables, tr_idx, tr_val, config.lam)
        sq, _ = k.residual_sums(*state.tables, va_idx, va_val)
        val_rmse = math.sqrt(sq / len(va_val))
        if not (math.isfinite(val_rmse) and math.isfinite(data + reg)):
            raise DivergenceError(f"non-finite loss in epoch {epoch}", epoch=epoch)
        trace.records.append(EpochRecord(epoch, data + reg, val_rmse))
        if on_epoch is not None:
            on_epoch(epoch, state)

        if val_rmse < trace.best_validation_rmse:
            trace.best_validation_rmse = val_rmse
            trace.best_epoch = epoch
            best = state.copy()
        if val_rmse < patience_ref - config.min_delta:
            patience_ref = val_rmse
            stale = 0
        else:
            stale += 1
        log.debug("epoch %d loss %.6g val_rmse %.6g", epoch, data + reg, val_rmse)
        if stale >= config.patience:
            trace.stopped_reason = "patience"
            break
    else:
        trace.stopped_reason = "max_epochs"
    return best, trace


# -- trace export ----------------------------------------------------------

def save_trace(trace: TrainTrace, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("epoch,train_loss,val_rmse\n")
        for rec in trace.records:
            fh.write(f"{rec.epoch},{rec.train_loss!r},{rec.val_rmse!r}\n")
        fh.write(f"#best,{trace.best_epoch},{trace.best_validation_rmse!r}\n")


def load_trace(path) -> TrainTrace:
    trace = TrainTrace()
    with open(path, encoding="utf-8") as fh:
        if fh.readline().strip() != "epoch,train_loss,val_rmse":
            raise ParseError("bad trace header", 1)
        for lineno, line in enumerate(fh, start=2):
            parts = line.strip().split(",")
            if parts[0] == "#best":
                trace.best_epoch = int(parts[1])
                trace.best_validation_rmse = float(parts[2])
                continue
            if len(parts) != 3:
                raise ParseError("expected 3 fields", lineno)
            trace.records.append(EpochRecord(int(parts[0]), float(parts[1]), float(parts[2])))
    return trace


def config_fields() -> list[str]:
    return [f.name for f in fields(TrainConfig)]
