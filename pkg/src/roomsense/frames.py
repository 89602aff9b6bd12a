"""Sensor-frame data model: ingestion, cleaning, label merging, correlation,
and feature selection.

A frame is an immutable bundle of a shared timestamp axis (epoch seconds,
nominally one sample every 120 s), named float64 channel series where NaN
marks a missing cell, and optional named integer label series.

CSV contract: first column ``timestamp`` (ISO-8601 or integer epoch seconds),
then feature columns by name, then optional label columns ``person`` and
``window_open``; UTF-8, ``.`` decimal separator, empty cell = missing.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import (
    ConfigError,
    DegenerateDataError,
    IntegrityError,
    ParseError,
    SchemaError,
)

# Canonical channel and label names of the sensor fleet.
STANDARD_CHANNELS: tuple[str, ...] = (
    "pressure", "temperature", "sound", "tvoc", "oxygen", "humidity",
    "humidity_abs", "co2", "co", "so2", "no2", "o3", "pm2_5", "pm10",
    "pm1", "sound_max", "dewpt",
)
STANDARD_LABELS: tuple[str, ...] = ("person", "window_open")

NOMINAL_PERIOD_S = 120


def _frozen(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class SensorFrame:
    """Timestamped multichannel sensor record with optional labels.

    values has shape (C, N) with NaN as the missing marker; label_values has
    shape (K, N) with non-negative integers.
    """

    timestamps: np.ndarray
    channel_names: tuple[str, ...]
    values: np.ndarray
    label_names: tuple[str, ...] = ()
    label_values: np.ndarray = field(default_factory=lambda: np.zeros((0, 0), dtype=np.int64))
    device_id: str = ""

    def __post_init__(self):
        ts = _frozen(np.asarray(self.timestamps, dtype=np.int64))
        vals = _frozen(np.asarray(self.values, dtype=np.float64))
        labs = _frozen(np.asarray(self.label_values, dtype=np.int64))
        if labs.size == 0:
            labs = _frozen(np.zeros((len(self.label_names), ts.shape[0]), dtype=np.int64))
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "label_values", labs)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "label_names", tuple(self.label_names))
        n = ts.shape[0]
        if vals.shape != (len(self.channel_names), n):
            raise IntegrityError(
                f"values shape {vals.shape} does not match "
                f"{len(self.channel_names)} channels x {n} rows"
            )
        if labs.shape != (len(self.label_names), n):
            raise IntegrityError(
                f"label shape {labs.shape} does not match "
                f"{len(self.label_names)} labels x {n} rows"
            )
        if n > 1 and not np.all(np.diff(ts) > 0):
            raise IntegrityError("timestamps must be strictly increasing")
        if len(set(self.channel_names)) != len(self.channel_names):
            raise IntegrityError("channel names must be unique")
        if len(set(self.label_names)) != len(self.label_names):
            raise IntegrityError("label names must be unique")
        if labs.size and labs.min() < 0:
            raise IntegrityError("label values must be >= 0")

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    def channel(self, name: str) -> np.ndarray:
        try:
            return self.values[self.channel_names.index(name)]
        except ValueError:
            raise SchemaError(f"unknown channel {name!r}") from None

    def label(self, name: str) -> np.ndarray:
        try:
            return self.label_values[self.label_names.index(name)]
        except ValueError:
            raise SchemaError(f"unknown label {name!r}") from None

    def select_channels(self, names: list[str] | tuple[str, ...]) -> "SensorFrame":
        idx = []
        for name in names:
            if name not in self.channel_names:
                raise SchemaError(f"unknown channel {name!r}")
            idx.append(self.channel_names.index(name))
        return SensorFrame(
            timestamps=self.timestamps,
            channel_names=tuple(names),
            values=self.values[idx],
            label_names=self.label_names,
            label_values=self.label_values,
            device_id=self.device_id,
        )

    def slice_rows(self, start: int, end: int) -> "SensorFrame":
        return SensorFrame(
            timestamps=self.timestamps[start:end],
            channel_names=self.channel_names,
            values=self.values[:, start:end],
            label_names=self.label_names,
            label_values=self.label_values[:, start:end],
            device_id=self.device_id,
        )

    def without_labels(self) -> "SensorFrame":
        return SensorFrame(
            timestamps=self.timestamps,
            channel_names=self.channel_names,
            values=self.values,
            device_id=self.device_id,
        )

    def label_matrix(self) -> np.ndarray:
        """Labels as an (N, K) float64 matrix in label-name order."""
        return self.label_values.T.astype(np.float64)


@dataclass(frozen=True)
class MissingReport:
    """Per-channel missing counts and index runs (start, length)."""

    channel_names: tuple[str, ...]
    counts: tuple[int, ...]
    runs: tuple[tuple[tuple[int, int], ...], ...]
    total_rows: int

    def to_json(self) -> str:
        doc = {
            "total_rows": self.total_rows,
            "channels": {
                name: {"missing": c, "runs": [list(r) for r in runs]}
                for name, c, runs in zip(self.channel_names, self.counts, self.runs)
            },
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class CorrelationMatrix:
    """Pearson r over features and classes; symmetric with unit diagonal."""

    variable_names: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen(np.asarray(self.matrix, dtype=np.float64)))
        d = len(self.variable_names)
        if self.matrix.shape != (d, d):
            raise IntegrityError("correlation matrix must be square over variable names")

    def value(self, a: str, b: str) -> float:
        i = self.variable_names.index(a)
        j = self.variable_names.index(b)
        return float(self.matrix[i, j])

    def to_json(self) -> str:
        doc = {"variables": list(self.variable_names), "matrix": self.matrix.tolist()}
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "CorrelationMatrix":
        doc = json.loads(text)
        return CorrelationMatrix(tuple(doc["variables"]), np.asarray(doc["matrix"]))


@dataclass(frozen=True)
class FeatureSet:
    """Retained channel names plus a provenance note for reproducibility."""

    names: tuple[str, ...]
    note: str

    def __post_init__(self):
        if not self.names:
            raise DegenerateDataError("feature set must be non-empty")

    def to_json(self) -> str:
        return json.dumps({"features": list(self.names), "note": self.note},
                          sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "FeatureSet":
        doc = json.loads(text)
        return FeatureSet(tuple(doc["features"]), doc.get("note", ""))


@dataclass(frozen=True)
class CsvSchema:
    """Column-name mapping for frame ingestion."""

    timestamp_column: str = "timestamp"
    label_columns: tuple[str, ...] = STANDARD_LABELS
    rename: dict[str, str] = field(default_factory=dict)


def _parse_timestamp(cell: str, row: int) -> int:
    cell = cell.strip()
    if not cell:
        raise ParseError(f"row {row}: empty timestamp", row=row, column="timestamp")
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(cell.replace("Z", "+00:00"))
    except ValueError:
        raise ParseError(f"row {row}: unparseable timestamp {cell!r}",
                         row=row, column="timestamp") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_frame(csv_bytes: bytes, schema: CsvSchema | None = None,
                device_id: str = "") -> SensorFrame:
    """Parse a CSV byte stream into a SensorFrame.

    Empty feature cells become NaN; rows are sorted by timestamp; duplicate
    timestamps raise IntegrityError.
    """
    schema = schema or CsvSchema()
    text = csv_bytes.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError("empty CSV: no header row") from None
    header = [schema.rename.get(h.strip(), h.strip()) for h in header]
    if not header or header[0] != schema.timestamp_column:
        raise SchemaError(
            f"first column must be {schema.timestamp_column!r}, got {header[:1]}"
        )
    if len(set(header)) != len(header):
        raise SchemaError("duplicate column names in header")
    label_cols = [h for h in header[1:] if h in schema.label_columns]
    channel_cols = [h for h in header[1:] if h not in schema.label_columns]

    ts_list: list[int] = []
    rows: list[list[float]] = []
    lab_rows: list[list[int]] = []
    col_of = {name: header.index(name) for name in header}
    for row_i, row in enumerate(reader, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {row_i}: expected {len(header)} cells, got {len(row)}",
                             row=row_i)
        ts_list.append(_parse_timestamp(row[0], row_i))
        vals = []
        for name in channel_cols:
            cell = row[col_of[name]].strip()
            if cell == "":
                vals.append(math.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise ParseError(f"row {row_i}, column {name!r}: unparseable cell {cell!r}",
                                 row=row_i, column=name) from None
        rows.append(vals)
        labs = []
        for name in label_cols:
            cell = row[col_of[name]].strip()
            try:
                v = int(cell)
            except ValueError:
                raise ParseError(f"row {row_i}, column {name!r}: label cell must be a "
                                 f"non-negative integer, got {cell!r}",
                                 row=row_i, column=name) from None
            if v < 0:
                raise ParseError(f"row {row_i}, column {name!r}: label cell must be >= 0",
                                 row=row_i, column=name)
            labs.append(v)
        lab_rows.append(labs)

    ts = np.asarray(ts_list, dtype=np.int64)
    if ts.size != np.unique(ts).size:
        dupes = ts[np.concatenate([[False], np.diff(np.sort(ts)) == 0])]
        raise IntegrityError(f"duplicate timestamps (e.g. {int(dupes[0]) if dupes.size else '?'})")
    order = np.argsort(ts, kind="stable")
    values = np.asarray(rows, dtype=np.float64).reshape(len(ts_list), len(channel_cols))
    labels = np.asarray(lab_rows, dtype=np.int64).reshape(len(ts_list), len(label_cols))
    return SensorFrame(
        timestamps=ts[order],
        channel_names=tuple(channel_cols),
        values=values[order].T,
        label_names=tuple(label_cols),
        label_values=labels[order].T,
        device_id=device_id,
    )


def frame_to_csv(frame: SensorFrame) -> bytes:
    """Serialize a frame back to the CSV contract (round-trips exactly)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["timestamp", *frame.channel_names, *frame.label_names])
    for i in range(len(frame)):
        row: list[str] = [str(int(frame.timestamps[i]))]
        for c in range(len(frame.channel_names)):
            v = frame.values[c, i]
            row.append("" if math.isnan(v) else repr(float(v)))
        for k in range(len(frame.label_names)):
            row.append(str(int(frame.label_values[k, i])))
        writer.writerow(row)
    return buf.getvalue().encode("utf-8")


def missing_report(frame: SensorFrame) -> MissingReport:
    """Count missing cells and their index runs per channel."""
    counts = []
    runs_all = []
    for c in range(len(frame.channel_names)):
        mask = np.isnan(frame.values[c])
        counts.append(int(mask.sum()))
        runs = []
        i = 0
        n = mask.shape[0]
        while i < n:
            if mask[i]:
                j = i
                while j < n and mask[j]:
                    j += 1
                runs.append((i, j - i))
                i = j
            else:
                i += 1
        runs_all.append(tuple(runs))
    return MissingReport(
        channel_names=frame.channel_names,
        counts=tuple(counts),
        runs=tuple(runs_all),
        total_rows=len(frame),
    )


def interpolate_missing(frame: SensorFrame, edge_policy: str = "trim") -> SensorFrame:
    """Fill interior missing runs linearly; handle edges per policy.

    edge_policy 'trim' drops leading/trailing rows that are missing in any
    channel (across all channels, keeping the timeline aligned); 'extend'
    repeats the nearest present value. Interior runs are always filled by
    linear interpolation between the nearest present neighbours (index-based,
    which equals time-based interpolation on the nominal uniform grid).
    """
    if edge_policy not in ("trim", "extend"):
        raise ConfigError(f"edge_policy must be 'trim' or 'extend', got {edge_policy!r}")
    n = len(frame)
    values = frame.values.copy()
    lead = 0
    trail = 0
    for c, name in enumerate(frame.channel_names):
        mask = np.isnan(values[c])
        if mask.all():
            raise DegenerateDataError(f"channel {name!r} has no present values")
        if not mask.any():
            continue
        present = np.flatnonzero(~mask)
        first, last = int(present[0]), int(present[-1])
        lead = max(lead, first)
        trail = max(trail, n - 1 - last)
        interior = np.flatnonzero(mask[first:last + 1]) + first
        if interior.size:
            values[c, interior] = np.interp(interior, present, values[c, present])
        if edge_policy == "extend":
            values[c, :first] = values[c, first]
            values[c, last + 1:] = values[c, last]
    if edge_policy == "trim" and (lead or trail):
        end = n - trail
        return SensorFrame(
            timestamps=frame.timestamps[lead:end],
            channel_names=frame.channel_names,
            values=values[:, lead:end],
            label_names=frame.label_names,
            label_values=frame.label_values[:, lead:end],
            device_id=frame.device_id,
        )
    return SensorFrame(
        timestamps=frame.timestamps,
        channel_names=frame.channel_names,
        values=values,
        label_names=frame.label_names,
        label_values=frame.label_values,
        device_id=frame.device_id,
    )


def binarize_person(frame: SensorFrame) -> SensorFrame:
    """Merge person counts into a presence indicator (count > 0 -> 1)."""
    if "person" not in frame.label_names:
        raise SchemaError("frame has no 'person' label")
    labels = frame.label_values.copy()
    k = frame.label_names.index("person")
    labels[k] = (labels[k] > 0).astype(np.int64)
    return SensorFrame(
        timestamps=frame.timestamps,
        channel_names=frame.channel_names,
        values=frame.values,
        label_names=frame.label_names,
        label_values=labels,
        device_id=frame.device_id,
    )


def _series_for(frame: SensorFrame, name: str) -> np.ndarray:
    if name in frame.channel_names:
        return frame.channel(name)
    if name in frame.label_names:
        return frame.label(name).astype(np.float64)
    raise SchemaError(f"unknown variable {name!r}")


def pearson_matrix(frame: SensorFrame, variables: list[str] | tuple[str, ...]) -> CorrelationMatrix:
    """Pearson r over the selected variables with population moments.

    Binary labels enter as 0/1 numeric series (point-biserial equivalent).
    """
    series = np.stack([_series_for(frame, v) for v in variables])
    if series.shape[1] < 2:
        raise DegenerateDataError("need at least 2 rows for correlation")
    if np.isnan(series).any():
        raise DegenerateDataError("missing values among selected variables; clean first")
    mean = series.mean(axis=1, keepdims=True)
    centered = series - mean
    std = np.sqrt((centered ** 2).mean(axis=1))
    for v, s in zip(variables, std):
        if s == 0.0:
            raise DegenerateDataError(f"variable {v!r} has zero variance")
    cov = centered @ centered.T / series.shape[1]
    r = cov / np.outer(std, std)
    r = np.clip(r, -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    r = (r + r.T) / 2.0
    return CorrelationMatrix(tuple(variables), r)


def select_features(matrix: CorrelationMatrix, pair_threshold: float = 0.9,
                    class_names: tuple[str, ...] = STANDARD_LABELS) -> FeatureSet:
    """Drop redundant features by greedy elimination of correlated pairs.

    Feature pairs are visited in descending |r|; while a surviving pair has
    |r| > pair_threshold, the member with the smaller max |r| to any class is
    dropped (ties drop the later one in channel order). Survivors are
    returned in their original order.
    """
    if not (0.0 < pair_threshold < 1.0):
        raise ConfigError(f"pair_threshold must be in (0, 1), got {pair_threshold}")
    names = matrix.variable_names
    for cname in class_names:
        if cname not in names:
            raise SchemaError(f"class {cname!r} missing from correlation matrix")
    feat_idx = [i for i, nm in enumerate(names) if nm not in class_names]
    cls_idx = [names.index(c) for c in class_names]
    m = matrix.matrix
    class_strength = {i: max(abs(m[i, j]) for j in cls_idx) for i in feat_idx}

    pairs = sorted(
        ((i, j) for a, i in enumerate(feat_idx) for j in feat_idx[a + 1:]),
        key=lambda p: (-abs(m[p[0], p[1]]), p[0], p[1]),
    )
    alive = set(feat_idx)
    dropped: list[tuple[str, str, float]] = []
    for i, j in pairs:
        if abs(m[i, j]) <= pair_threshold:
            break
        if i not in alive or j not in alive:
            continue
        # keep the member more correlated with the classes; tie drops the later
        victim = j if class_strength[j] <= class_strength[i] else i
        alive.remove(victim)
        keeper = i if victim == j else j
        dropped.append((names[victim], names[keeper], float(m[i, j])))
    survivors = tuple(names[i] for i in feat_idx if i in alive)
    note = f"pair_threshold={pair_threshold}; dropped " + (
        ", ".join(f"{v} (r={r:.3f} with {k})" for v, k, r in dropped) if dropped else "nothing"
    )
    return FeatureSet(survivors, note)
