"""Timestamped weighted edge lists to normalized sparse tensors.

Input lines hold ``source, target, weight, timestamp`` (the layout of the
public Bitcoin OTC / Alpha trust networks).  Node tokens are remapped to
dense indices, timestamps are binned into ``k_slots`` equal-width slots
and weights are min-max scaled into [0, 1].
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

from .errors import ConfigError, DataError, ParseError, RangeError
from .tensor_store import DUPLICATE_POLICIES, Entry, SparseTensorCOO, TensorShape

DEFAULT_K_SLOTS = 165


class RawRecord(NamedTuple):
    source_id: str
    target_id: str
    weight: float
    timestamp: float


@dataclass
class IngestManifest:
    id_map_i: dict[str, int]
    id_map_j: dict[str, int]
    k_slots: int
    t_min: float
    t_max: float
    w_min: float
    w_max: float
    duplicate_policy: str = "mean"
    n_records: int = 0
    n_entries: int = 0
    extra: dict = field(default_factory=dict)

    def denormalize(self, value: float) -> float:
        return self.w_min + value * (self.w_max - self.w_min)


def parse_edge_list(lines: Iterable[str], delimiter: str = ",") -> list[RawRecord]:
    """Parse delimited edge records; blank lines and ``#`` comments are skipped."""
    records = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(delimiter)]
        if len(parts) != 4:
            raise ParseError(f"expected 4 fields, got {len(parts)}", lineno)
        try:
            weight = float(parts[2])
            timestamp = float(parts[3])
        except ValueError:
            raise ParseError(f"non-numeric weight or timestamp in {line!r}", lineno) from None
        if not (math.isfinite(weight) and math.isfinite(timestamp)):
            raise ParseError("weight and timestamp must be finite", lineno)
        records.append(RawRecord(parts[0], parts[1], weight, timestamp))
    return records


def bin_time(timestamp: float, t_min: float, t_max: float, k_slots: int) -> int:
    """Equal-width slot index in ``[0, k_slots)``; ``t_max`` lands in the last slot."""
    if k_slots < 1:
        raise ConfigError("k_slots must be >= 1")
    if not t_min <= timestamp <= t_max:
        raise RangeError(f"timestamp {timestamp} outside [{t_min}, {t_max}]")
    if t_max == t_min:
        return 0
    slot = math.floor((timestamp - t_min) / (t_max - t_min) * k_slots)
    return min(slot, k_slots - 1)


def normalize_weight(weight: float, w_min: float, w_max: float) -> float:
    if not w_min < w_max:
        raise ConfigError(f"degenerate weight range [{w_min}, {w_max}]")
    if not w_min <= weight <= w_max:
        raise RangeError(f"weight {weight} outside [{w_min}, {w_max}]")
    return (weight - w_min) / (w_max - w_min)


def build_tensor(records, k_slots: int = DEFAULT_K_SLOTS, duplicate_policy: str = "mean",
                 w_range=None, shared_ids: bool = False):
    """Build the (source, target, time-slot) tensor from raw records.

    Parameters
    ----------
    records : sequence of RawRecord
    k_slots : int
    duplicate_policy : {"mean", "last-wins"}
        How observations landing on the same cell are combined.
    w_range : (float, float), optional
        Normalization bounds; by default the observed weight extrema.
    shared_ids : bool
        Index sources and targets from one node universe, giving a square
        shape.  By default each mode gets its own first-appearance index.

    Returns
    -------
    tensor : SparseTensorCOO
    manifest : IngestManifest
    """
    records = list(records)
    if not records:
        raise DataError("no records to ingest")
    if k_slots < 1:
        raise ConfigError("k_slots must be >= 1")
    if duplicate_policy not in DUPLICATE_POLICIES:
        raise ConfigError(f"unknown duplicate policy {duplicate_policy!r}")

    id_i: dict[str, int] = {}
    id_j: dict[str, int] = id_i if shared_ids else {}
    for rec in records:
        id_i.setdefault(rec.source_id, len(id_i))
        id_j.setdefault(rec.target_id, len(id_j))
    t_min = min(r.timestamp for r in records)
    t_max = max(r.timestamp for r in records)
    if w_range is None:
        w_min = min(r.weight for r in records)
        w_max = max(r.weight for r in records)
    else:
        w_min, w_max = (float(w) for w in w_range)
    if not w_min < w_max:
        raise ConfigError(f"cannot normalize: weight range [{w_min}, {w_max}] is degenerate")

    tensor = SparseTensorCOO(TensorShape(len(id_i), len(id_j), k_slots))
    for rec in records:
        tensor.insert_or_merge(
            Entry(id_i[rec.source_id], id_j[rec.target_id],
                  bin_time(rec.timestamp, t_min, t_max, k_slots),
                  normalize_weight(rec.weight, w_min, w_max)),
            duplicate_policy,
        )
    manifest = IngestManifest(
        id_map_i=dict(id_i), id_map_j=dict(id_j), k_slots=k_slots,
        t_min=t_min, t_max=t_max, w_min=w_min, w_max=w_max,
        duplicate_policy=duplicate_policy, n_records=len(records), n_entries=len(tensor),
    )
    return tensor, manifest


def read_edge_file(path, delimiter=None) -> list[RawRecord]:
    """Parse an edge-list file; the delimiter defaults to TAB for .tsv/.txt, else comma."""
    if delimiter is None:
        delimiter = "\t" if str(path).endswith((".tsv", ".txt")) else ","
    opener = open
    if str(path).endswith(".gz"):
        import gzip
        opener = gzip.open
    with opener(path, "rt", encoding="utf-8") as fh:
        return parse_edge_list(fh, delimiter)


def save_manifest(manifest: IngestManifest, directory) -> None:
    """Write ``manifest.tsv`` plus the two id-map files into ``directory``."""
    for name, mapping in (("ids_i.tsv", manifest.id_map_i), ("ids_j.tsv", manifest.id_map_j)):
        with open(os.path.join(directory, name), "w", encoding="utf-8", newline="\n") as fh:
            for token, index in mapping.items():
                fh.write(f"{token}\t{index}\n")
    rows = [
        ("k_slots", manifest.k_slots),
        ("t_min", repr(manifest.t_min)),
        ("t_max", repr(manifest.t_max)),
        ("w_min", repr(manifest.w_min)),
        ("w_max", repr(manifest.w_max)),
        ("duplicate_policy", manifest.duplicate_policy),
        ("n_records", manifest.n_records),
        ("n_entries", manifest.n_entries),
        ("id_map_i", "ids_i.tsv"),
        ("id_map_j", "ids_j.tsv"),
    ]
    rows.extend(manifest.extra.items())
    with open(os.path.join(directory, "manifest.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        for key, value in rows:
            fh.write(f"{key}\t{value}\n")


def load_manifest(directory) -> IngestManifest:
    kv = {}
    with open(os.path.join(directory, "manifest.tsv"), encoding="utf-8") as fh:
        for line in fh:
            key, _, value = line.rstrip("\n").partition("\t")
            kv[key] = value

    def read_map(name):
        with open(os.path.join(directory, kv[name]), encoding="utf-8") as fh:
            return {tok: int(ix) for tok, ix in (ln.rstrip("\n").rsplit("\t", 1) for ln in fh)}

    return IngestManifest(
        id_map_i=read_map("id_map_i"), id_map_j=read_map("id_map_j"),
        k_slots=int(kv["k_slots"]), t_min=float(kv["t_min"]), t_max=float(kv["t_max"]),
        w_min=float(kv["w_min"]), w_max=float(kv["w_max"]),
        duplicate_policy=kv["duplicate_policy"],
        n_records=int(kv["n_records"]), n_entries=int(kv["n_entries"]),
    )
