"""Sigmoid-reparameterized CP model.

Each entity and time slot owns a row of unconstrained parameters ``y``;
the non-negative latent factor is ``x = sigmoid(y)``, so factors stay in
(0, 1) without any projection.  A cell is predicted as
``sum_r x_ir * x_jr * x_kr``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from . import _backend
from .errors import BoundsError, ConfigError, ParseError
from .tensor_store import Entry, SparseTensorCOO, TensorShape

REG_MODES = ("eq6-exact", "raw-y")


def sigmoid(alpha: float) -> float:
    # branch on sign so exp never overflows
    if alpha >= 0.0:
        return 1.0 / (1.0 + math.exp(-alpha))
    z = math.exp(alpha)
    return z / (1.0 + z)


def sigmoid_derivative(alpha: float) -> float:
    p = sigmoid(alpha)
    return p * (1.0 - p)


@dataclass
class FactorState:
    """Parameter tables for the three modes, each of shape (dim, rank)."""

    y_i: np.ndarray
    y_j: np.ndarray
    y_k: np.ndarray
    seed: int = 0

    def __post_init__(self):
        self.y_i = np.ascontiguousarray(self.y_i, dtype=np.float64)
        self.y_j = np.ascontiguousarray(self.y_j, dtype=np.float64)
        self.y_k = np.ascontiguousarray(self.y_k, dtype=np.float64)
        ranks = {t.shape[1] for t in self.tables if t.ndim == 2}
        if any(t.ndim != 2 for t in self.tables) or len(ranks) != 1:
            raise ConfigError("factor tables must be 2-D with a common rank")
        if self.rank < 1:
            raise ConfigError("rank must be >= 1")

    @classmethod
    def constant(cls, shape, rank: int, value: float = 0.0, seed: int = 0):
        di, dj, dk = shape
        return cls(np.full((di, rank), value), np.full((dj, rank), value),
                   np.full((dk, rank), value), seed)

    @property
    def tables(self):
        return (self.y_i, self.y_j, self.y_k)

    @property
    def rank(self) -> int:
        return self.y_i.shape[1]

    @property
    def shape(self) -> TensorShape:
        return TensorShape(self.y_i.shape[0], self.y_j.shape[0], self.y_k.shape[0])

    def factors(self):
        """Non-negative factor tables ``sigmoid(y)`` for the three modes."""
        k = _backend.kernels
        return tuple(k.sigmoid_array(t) for t in self.tables)

    def copy(self) -> "FactorState":
        return FactorState(self.y_i.copy(), self.y_j.copy(), self.y_k.copy(), self.seed)

    def is_finite(self) -> bool:
        return all(np.isfinite(t).all() for t in self.tables)

    def __eq__(self, other):
        if not isinstance(other, FactorState):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.tables, other.tables))


class LossBreakdown(NamedTuple):
    data_term: float
    reg_term: float
    total: float


def _check_index(state: FactorState, i, j, k):
    di, dj, dk = state.shape
    if not (0 <= i < di and 0 <= j < dj and 0 <= k < dk):
        raise BoundsError(f"index ({i}, {j}, {k}) outside shape {(di, dj, dk)}")


def predict(state: FactorState, i: int, j: int, k: int) -> float:
    _check_index(state, i, j, k)
    a, b, c = state.y_i[i], state.y_j[j], state.y_k[k]
    acc = 0.0
    for r in range(state.rank):
        acc += sigmoid(float(a[r])) * sigmoid(float(b[r])) * sigmoid(float(c[r]))
    return acc


def residual(state: FactorState, entry: Entry) -> float:
    return entry[3] - predict(state, entry[0], entry[1], entry[2])


def entry_arrays(entries) -> tuple[np.ndarray, np.ndarray]:
    """(indices, values) arrays for a tensor or a sequence of entries."""
    if isinstance(entries, SparseTensorCOO):
        return entries.indices, entries.values
    if isinstance(entries, tuple) and len(entries) == 2 and isinstance(entries[0], np.ndarray):
        return (np.ascontiguousarray(entries[0], dtype=np.int64),
                np.ascontiguousarray(entries[1], dtype=np.float64))
    entries = list(entries)
    idx = np.array([e[:3] for e in entries], dtype=np.int64).reshape(-1, 3)
    vals = np.array([e[3] for e in entries], dtype=np.float64)
    return idx, vals


def _check_entry_bounds(state, idx):
    if len(idx) == 0:
        return
    if idx.min() < 0 or any(idx[:, a].max() >= d for a, d in enumerate(state.shape)):
        raise BoundsError(f"entry indices outside shape {tuple(state.shape)}")


def loss(state: FactorState, entries, lam: float) -> LossBreakdown:
    """Regularized squared-error objective over ``entries``.

    ``0.5 * sum e^2`` plus ``0.5 * lam * sum_r (x_ir^2 + x_jr^2 + x_kr^2)``,
    with the penalty counted once per observed entry.
    """
    if not lam >= 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    idx, vals = entry_arrays(entries)
    _check_entry_bounds(state, idx)
    data, reg = _backend.kernels.loss_terms(*state.tables, idx, vals, float(lam))
    return LossBreakdown(data, reg, data + reg)


def constrained_loss(x_i, x_j, x_k, entries) -> float:
    """Plain squared-error half-sum on explicit non-negative factors.

    This is the constrained objective the sigmoid reparameterization
    replaces; it requires the caller to keep the factors non-negative.
    """
    idx, vals = entry_arrays(entries)
    for t in (x_i, x_j, x_k):
        if np.any(np.asarray(t) < 0):
            raise ConfigError("constrained objective requires non-negative factors")
    pred = np.einsum("nr,nr,nr->n", x_i[idx[:, 0]], x_j[idx[:, 1]], x_k[idx[:, 2]])
    return 0.5 * float(np.sum((vals - pred) ** 2))


def point_gradient(state: FactorState, entry: Entry, lam: float, reg_mode: str = "eq6-exact"):
    """Gradient of one entry's regularized loss with respect to its three rows.

    Returns three length-R arrays.  With ``reg_mode="raw-y"`` the penalty
    contribution uses ``lam * y`` in place of ``lam * sigmoid(y)``; that
    variant is not the derivative of any objective here.
    """
    if reg_mode not in REG_MODES:
        raise ConfigError(f"unknown reg_mode {reg_mode!r}")
    if not lam >= 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    i, j, k, a = entry
    _check_index(state, i, j, k)
    ri, rj, rk = state.y_i[i].tolist(), state.y_j[j].tolist(), state.y_k[k].tolist()
    pi = [sigmoid(v) for v in ri]
    pj = [sigmoid(v) for v in rj]
    pk = [sigmoid(v) for v in rk]
    pred = 0.0
    for r in range(state.rank):
        pred += pi[r] * pj[r] * pk[r]
    e = a - pred
    raw = reg_mode == "raw-y"
    gi, gj, gk = [], [], []
    for r in range(state.rank):
        si, sj, sk = (ri[r], rj[r], rk[r]) if raw else (pi[r], pj[r], pk[r])
        gi.append((pi[r] * (1.0 - pi[r])) * (lam * si - e * (pj[r] * pk[r])))
        gj.append((pj[r] * (1.0 - pj[r])) * (lam * sj - e * (pi[r] * pk[r])))
        gk.append((pk[r] * (1.0 - pk[r])) * (lam * sk - e * (pi[r] * pj[r])))
    return np.array(gi), np.array(gj), np.array(gk)


# -- persistence -----------------------------------------------------------

_MODE_TAGS = ("I", "J", "K")


def save_factors(state: FactorState, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        di, dj, dk = state.shape
        fh.write(f"#factors\t{di}\t{dj}\t{dk}\t{state.rank}\t{state.seed}\n")
        for tag, table in zip(_MODE_TAGS, state.tables):
            for n, row in enumerate(table.tolist()):
                fh.write(tag + "\t" + str(n) + "\t" + "\t".join(repr(v) for v in row) + "\n")


def load_factors(path) -> FactorState:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[0] != "#factors" or len(header) != 6:
            raise ParseError("missing '#factors' header", 1)
        di, dj, dk, rank, seed = (int(x) for x in header[1:])
        tables = {tag: np.full((d, rank), np.nan) for tag, d in zip(_MODE_TAGS, (di, dj, dk))}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != rank + 2 or parts[0] not in tables:
                raise ParseError("malformed factor row", lineno)
            tables[parts[0]][int(parts[1])] = [float(v) for v in parts[2:]]
    state = FactorState(tables["I"], tables["J"], tables["K"], seed)
    if not state.is_finite():
        raise ParseError("factor file is missing rows or holds non-finite values")
    return state
