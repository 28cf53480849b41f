"""Accuracy metrics, run comparison and a synthetic ground-truth generator."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _backend
from .errors import ConfigError, EvaluationError
from .model import FactorState, _check_entry_bounds, entry_arrays
from .solver import TrainTrace
from .tensor_store import SparseTensorCOO, TensorShape, _check_seed

SYNTH_STREAM = 0x5EED


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    entry_count: int
    split_name: str = ""


class ComparisonRow(NamedTuple):
    label: str
    best_rmse: float
    epochs_to_best: int


def _residual_sums(state, entries):
    idx, vals = entry_arrays(entries)
    if len(vals) == 0:
        raise EvaluationError("cannot evaluate a metric over zero entries")
    _check_entry_bounds(state, idx)
    sq, ab = _backend.kernels.residual_sums(*state.tables, idx, vals)
    return sq, ab, len(vals)


def rmse(state: FactorState, entries) -> float:
    sq, _, n = _residual_sums(state, entries)
    return math.sqrt(sq / n)


def mae(state: FactorState, entries) -> float:
    _, ab, n = _residual_sums(state, entries)
    return ab / n


def evaluate(state: FactorState, entries, split_name: str = "") -> EvalReport:
    sq, ab, n = _residual_sums(state, entries)
    return EvalReport(math.sqrt(sq / n), ab / n, n, split_name)


def synth_tensor(dims, true_rank: int, n_entries: int, noise_sd: float = 0.0, seed: int = 0):
    """Random low-rank tensor with known factors.

    Ground-truth parameters are uniform on [-1, 1].  ``n_entries`` distinct
    cells are observed with value ``predict / true_rank`` plus Gaussian
    noise, clipped to [0, 1].

    Returns
    -------
    tensor : SparseTensorCOO
    truth : FactorState
        Its predictions divided by ``true_rank`` reproduce the noiseless
        values.
    """
    shape = dims if isinstance(dims, TensorShape) else TensorShape(*dims)
    seed = _check_seed(seed)
    if true_rank < 1:
        raise ConfigError("true_rank must be >= 1")
    if not 0 <= n_entries <= shape.volume:
        raise ConfigError(f"n_entries={n_entries} exceeds tensor volume {shape.volume}")
    if not noise_sd >= 0:
        raise ConfigError("noise_sd must be >= 0")
    rng = np.random.default_rng([SYNTH_STREAM, seed])
    truth = FactorState(
        rng.uniform(-1.0, 1.0, (shape.dim_i, true_rank)),
        rng.uniform(-1.0, 1.0, (shape.dim_j, true_rank)),
        rng.uniform(-1.0, 1.0, (shape.dim_k, true_rank)),
        seed=seed,
    )
    flat = np.sort(rng.choice(shape.volume, size=n_entries, replace=False))
    idx = np.ascontiguousarray(np.stack(np.unravel_index(flat, tuple(shape)), axis=1), dtype=np.int64)
    vals = _backend.kernels.predict_many(*truth.tables, idx) / true_rank
    if noise_sd > 0:
        vals = np.clip(vals + rng.normal(0.0, noise_sd, n_entries), 0.0, 1.0)
    return SparseTensorCOO(shape, idx, vals), truth


def compare_runs(traces: Sequence[tuple[str, TrainTrace]]) -> list[ComparisonRow]:
    """Best validation RMSE and the first epoch reaching it, per labelled run.

    Rows are ordered by best RMSE; ties keep input order.
    """
    if not traces:
        raise ConfigError("compare_runs needs at least one trace")
    rows = []
    for label, trace in traces:
        rmses = [r.val_rmse for r in trace.records]
        best = min(rmses)
        rows.append(ComparisonRow(label, best, trace.records[rmses.index(best)].epoch))
    return sorted(rows, key=lambda row: row.best_rmse)


def save_report(rows: Sequence[ComparisonRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("label,best_rmse,epochs_to_best\n")
        for row in rows:
            fh.write(f"{row.label},{row.best_rmse!r},{row.epochs_to_best}\n")
