"""Coordinate (COO) storage for sparse, incomplete 3-way tensors.

Only the known entries are stored; every other cell of the index space is
treated as unobserved.  Indices are dense, 0-based integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import BoundsError, ConfigError, DataError, ParseError

DUPLICATE_POLICIES = ("mean", "last-wins")

# stream tags keep split/init/shuffle random streams independent for one seed
SPLIT_STREAM = 0x5B17


@dataclass(frozen=True)
class TensorShape:
    dim_i: int
    dim_j: int
    dim_k: int

    def __post_init__(self):
        for name in ("dim_i", "dim_j", "dim_k"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")

    def __iter__(self):
        return iter((self.dim_i, self.dim_j, self.dim_k))

    @property
    def volume(self) -> int:
        return self.dim_i * self.dim_j * self.dim_k


class Entry(NamedTuple):
    i: int
    j: int
    k: int
    value: float


class SparseTensorCOO:
    """Incomplete tensor holding the set of known entries.

    Parameters
    ----------
    shape : TensorShape or tuple of int
    indices : array_like of int, shape (n, 3), optional
    values : array_like of float, shape (n,), optional

    Duplicate ``(i, j, k)`` triples are rejected at construction; use
    :meth:`insert_or_merge` to accumulate observations that may collide.
    """

    def __init__(self, shape, indices=None, values=None):
        if not isinstance(shape, TensorShape):
            shape = TensorShape(*(int(d) for d in shape))
        self.shape = shape
        if indices is None:
            indices = np.empty((0, 3), dtype=np.int64)
            values = np.empty(0, dtype=np.float64)
        indices = np.ascontiguousarray(indices, dtype=np.int64).reshape(-1, 3)
        values = np.ascontiguousarray(values, dtype=np.float64).reshape(-1)
        if len(indices) != len(values):
            raise DataError("indices and values have different lengths")
        _check_bounds(indices, shape)
        self._i = indices[:, 0].tolist()
        self._j = indices[:, 1].tolist()
        self._k = indices[:, 2].tolist()
        self._v = values.tolist()
        self._pos = {key: n for n, key in enumerate(zip(self._i, self._j, self._k))}
        if len(self._pos) != len(self._v):
            raise DataError("duplicate (i, j, k) triples in tensor entries")
        self._counts = [1] * len(self._v)
        self._cache = (indices, values)

    @classmethod
    def from_entries(cls, shape, entries: Iterable[Entry], policy: str = "mean"):
        tensor = cls(shape)
        for entry in entries:
            tensor.insert_or_merge(entry, policy)
        return tensor

    def __len__(self) -> int:
        return len(self._v)

    def __iter__(self) -> Iterator[Entry]:
        return (Entry(*t) for t in zip(self._i, self._j, self._k, self._v))

    def __getitem__(self, n) -> Entry:
        return Entry(self._i[n], self._j[n], self._k[n], self._v[n])

    def __contains__(self, key) -> bool:
        return tuple(key[:3]) in self._pos

    def __repr__(self):
        return f"SparseTensorCOO(shape={tuple(self.shape)}, nnz={len(self)})"

    @property
    def entries(self) -> list[Entry]:
        return list(self)

    @property
    def indices(self) -> np.ndarray:
        """(n, 3) int64 array of coordinates."""
        return self._arrays()[0]

    @property
    def values(self) -> np.ndarray:
        return self._arrays()[1]

    def _arrays(self):
        if self._cache is None:
            idx = np.empty((len(self._v), 3), dtype=np.int64)
            idx[:, 0] = self._i
            idx[:, 1] = self._j
            idx[:, 2] = self._k
            self._cache = (idx, np.array(self._v, dtype=np.float64))
        return self._cache

    def insert_or_merge(self, candidate: Entry, policy: str = "mean") -> "SparseTensorCOO":
        """Add ``candidate`` or merge it into the existing entry at its triple.

        ``policy="mean"`` keeps the arithmetic mean of every observation
        merged into the cell so far; ``"last-wins"`` overwrites.  Mutates
        and returns ``self``.
        """
        if policy not in DUPLICATE_POLICIES:
            raise ConfigError(f"unknown duplicate policy {policy!r}")
        i, j, k, value = int(candidate[0]), int(candidate[1]), int(candidate[2]), float(candidate[3])
        if not (0 <= i < self.shape.dim_i and 0 <= j < self.shape.dim_j and 0 <= k < self.shape.dim_k):
            raise BoundsError(f"entry ({i}, {j}, {k}) outside shape {tuple(self.shape)}")
        self._cache = None
        n = self._pos.get((i, j, k))
        if n is None:
            self._pos[(i, j, k)] = len(self._v)
            self._i.append(i)
            self._j.append(j)
            self._k.append(k)
            self._v.append(value)
            self._counts.append(1)
        elif policy == "mean":
            c = self._counts[n]
            self._v[n] = (self._v[n] * c + value) / (c + 1)
            self._counts[n] = c + 1
        else:
            self._v[n] = value
            self._counts[n] += 1
        return self

    def subset(self, positions) -> tuple[np.ndarray, np.ndarray]:
        """Index and value arrays for the given entry positions."""
        positions = np.asarray(positions, dtype=np.int64)
        idx, vals = self._arrays()
        return np.ascontiguousarray(idx[positions]), np.ascontiguousarray(vals[positions])

    def select(self, positions) -> "SparseTensorCOO":
        idx, vals = self.subset(positions)
        return SparseTensorCOO(self.shape, idx, vals)


def _check_bounds(indices, shape):
    if len(indices) == 0:
        return
    if indices.min() < 0:
        raise BoundsError("negative tensor index")
    for axis, dim in enumerate(shape):
        if indices[:, axis].max() >= dim:
            raise BoundsError(f"index on axis {axis} exceeds dimension {dim}")


def insert_or_merge(tensor: SparseTensorCOO, candidate: Entry, policy: str = "mean") -> SparseTensorCOO:
    return tensor.insert_or_merge(candidate, policy)


def density(tensor: SparseTensorCOO) -> float:
    """Fraction of the tensor volume that is observed."""
    return len(tensor) / tensor.shape.volume


@dataclass(frozen=True)
class SplitAssignment:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)


def split_sizes(n: int, ratios) -> tuple[int, int, int]:
    """Largest-remainder apportionment of ``n`` items over three ratios."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3:
        raise ConfigError("split needs exactly three ratios")
    if any(not r > 0 for r in ratios):
        raise ConfigError(f"split ratios must be positive, got {ratios}")
    if abs(math.fsum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {ratios}")
    exact = [r * n for r in ratios]
    sizes = [math.floor(x) for x in exact]
    short = n - sum(sizes)
    # ties go to the earlier block
    order = sorted(range(3), key=lambda b: (-(exact[b] - sizes[b]), b))
    for b in order[:short]:
        sizes[b] += 1
    if n >= 3 and min(sizes) == 0:
        raise ConfigError(f"ratios {ratios} leave an empty split for {n} entries")
    return tuple(sizes)


def split(tensor: SparseTensorCOO | int, ratios=(0.7, 0.1, 0.2), seed: int = 0) -> SplitAssignment:
    """Seeded train/validation/test partition of the entry positions.

    ``tensor`` may also be a plain entry count.  The positions are shuffled
    with a permutation drawn from ``seed`` and cut into contiguous blocks.
    """
    n = tensor if isinstance(tensor, (int, np.integer)) else len(tensor)
    seed = _check_seed(seed)
    n_train, n_val, _ = split_sizes(n, ratios)
    perm = np.random.default_rng([SPLIT_STREAM, seed]).permutation(n).astype(np.int64)
    return SplitAssignment(
        train=perm[:n_train],
        validation=perm[n_train:n_train + n_val],
        test=perm[n_train + n_val:],
        seed=seed,
    )


def _check_seed(seed) -> int:
    if int(seed) != seed or seed < 0:
        raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
    return int(seed)


# -- on-disk form ----------------------------------------------------------

def save_tensor(tensor: SparseTensorCOO, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        d = tensor.shape
        fh.write(f"#shape\t{d.dim_i}\t{d.dim_j}\t{d.dim_k}\n")
        for e in tensor:
            fh.write(f"{e.i}\t{e.j}\t{e.k}\t{e.value!r}\n")


def load_tensor(path) -> SparseTensorCOO:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[0] != "#shape" or len(header) != 4:
            raise ParseError("missing '#shape' header", 1)
        try:
            shape = TensorShape(*(int(x) for x in header[1:]))
        except ValueError as exc:
            raise ParseError(f"bad shape header: {exc}", 1) from None
        rows, vals = [], []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 4:
                raise ParseError(f"expected 4 fields, got {len(parts)}", lineno)
            try:
                rows.append((int(parts[0]), int(parts[1]), int(parts[2])))
                vals.append(float(parts[3]))
            except ValueError as exc:
                raise ParseError(str(exc), lineno) from None
    return SparseTensorCOO(shape, np.array(rows, dtype=np.int64).reshape(-1, 3), np.array(vals))
