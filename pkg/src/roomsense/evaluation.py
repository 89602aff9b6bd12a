"""Metrics, confusion matrices, prediction timelines, and spike smoothing."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .frames import SensorFrame
from .pipeline import (
    DEFAULT_MAX_GAP_S,
    ScalerParams,
    WindowSet,
    label_offset,
    slide,
    split_on_gaps,
    transform,
)

NO_PREDICTION = -1


def predict_probabilities(model, X: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Head probabilities in eval mode, chunked to bound layer-cache memory."""
    chunks = [model.predict_proba(X[i:i + batch_size])
              for i in range(0, X.shape[0], batch_size)]
    return np.concatenate(chunks, axis=0)


def feature_matrix(model, X: np.ndarray, batch_size: int = 512) -> np.ndarray:
    """Model feature space (GAP output / last hidden / latent), chunked."""
    chunks = [model.feature_space(X[i:i + batch_size])
              for i in range(0, X.shape[0], batch_size)]
    return np.concatenate(chunks, axis=0)


@dataclass(frozen=True)
class Metrics:
    class_names: tuple[str, ...]
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    accuracy: float

    def to_json(self) -> str:
        doc = {
            "accuracy": self.accuracy,
            "classes": {
                name: {"precision": p, "recall": r, "f1": f, "support": s}
                for name, p, r, f, s in zip(self.class_names, self.precision,
                                            self.recall, self.f1, self.support)
            },
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class ClassConfusion:
    class_name: str
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusions_to_json(confusions: list[ClassConfusion]) -> str:
    doc = {c.class_name: {"tp": c.tp, "fp": c.fp, "fn": c.fn, "tn": c.tn}
           for c in confusions}
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def evaluate(model, test: WindowSet, threshold: float = 0.5,
             batch_size: int = 512) -> tuple[Metrics, list[ClassConfusion]]:
    """Per-class precision/recall/F1 and element-wise accuracy at a threshold."""
    probs = predict_probabilities(model, test.X, batch_size)
    decisions = probs >= threshold
    truth = test.Y >= 0.5
    names = test.class_names if test.class_names else tuple(
        f"class{k}" for k in range(truth.shape[1]))
    precision, recall, f1, support = [], [], [], []
    confusions = []
    for k, name in enumerate(names):
        d = decisions[:, k]
        y = truth[:, k]
        tp = int(np.sum(d & y))
        fp = int(np.sum(d & ~y))
        fn = int(np.sum(~d & y))
        tn = int(np.sum(~d & ~y))
        if tp + fn == 0:
            warnings.warn(f"class {name!r} has zero support in the test set")
        p = tp / (tp + fp) if tp + fp > 0 else 0.0
        r = tp / (tp + fn) if tp + fn > 0 else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(f)
        support.append(tp + fn)
        confusions.append(ClassConfusion(name, tp, fp, fn, tn))
    accuracy = float((decisions == truth).mean())
    return Metrics(tuple(names), tuple(precision), tuple(recall), tuple(f1),
                   tuple(support), accuracy), confusions


@dataclass
class PredictionTrack:
    """Per-timestamp class probabilities and thresholded decisions.

    Timestamps with no prediction carry NaN probability and decision -1.
    Wherever a probability exists, decision == (probability >= threshold).
    """

    timestamps: np.ndarray
    class_names: tuple[str, ...]
    probabilities: np.ndarray  # (K, N) float64, NaN marks no prediction
    decisions: np.ndarray      # (K, N) int8, -1 marks no prediction
    threshold: float

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.decisions = np.asarray(self.decisions, dtype=np.int8)

    def __len__(self) -> int:
        return self.timestamps.shape[0]

    def to_json(self) -> str:
        doc = {
            "threshold": self.threshold,
            "timestamps": self.timestamps.tolist(),
            "classes": list(self.class_names),
            "probabilities": {
                name: [None if math.isnan(v) else v for v in self.probabilities[k]]
                for k, name in enumerate(self.class_names)
            },
            "decisions": {
                name: self.decisions[k].tolist()
                for k, name in enumerate(self.class_names)
            },
        }
        return json.dumps(doc, sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_json(text: str) -> "PredictionTrack":
        doc = json.loads(text)
        names = tuple(doc["classes"])
        probs = np.array([[math.nan if v is None else v for v in doc["probabilities"][n]]
                          for n in names], dtype=np.float64)
        decs = np.array([doc["decisions"][n] for n in names], dtype=np.int8)
        return PredictionTrack(np.asarray(doc["timestamps"]), names, probs, decs,
                               doc["threshold"])

    def to_csv(self) -> str:
        header = ["timestamp"]
        for name in self.class_names:
            header += [f"prob_{name}", f"decision_{name}"]
        lines = [",".join(header)]
        for i in range(len(self)):
            row = [str(int(self.timestamps[i]))]
            for k in range(len(self.class_names)):
                p = self.probabilities[k, i]
                row.append("" if math.isnan(p) else repr(float(p)))
                row.append(str(int(self.decisions[k, i])))
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"


def predict_timeline(model, frame: SensorFrame, scaler: ScalerParams, length: int,
                     position: str = "first", threshold: float = 0.5,
                     max_gap_s: int = DEFAULT_MAX_GAP_S,
                     class_names: tuple[str, ...] | None = None,
                     batch_size: int = 512) -> PredictionTrack:
    """Stride-1 window predictions placed at their label-position timestamp.

    Windows never cross gap boundaries; rows no window maps to carry the
    explicit no-prediction marker.
    """
    sel = frame.select_channels(scaler.channel_names)
    scaled = transform(scaler, sel)
    if class_names is None:
        k = getattr(getattr(model, "config", None), "classes", None)
        if k is not None and len(frame.label_names) == k:
            class_names = frame.label_names
        elif k is not None:
            class_names = tuple(f"class{j}" for j in range(k))
        else:
            class_names = frame.label_names or ("class0",)
    names = tuple(class_names)
    n = len(frame)
    probs = np.full((len(names), n), np.nan)
    decisions = np.full((len(names), n), NO_PREDICTION, dtype=np.int8)
    if n < length:
        warnings.warn(f"frame of {n} rows is shorter than window length {length}; "
                      "empty track")
        return PredictionTrack(frame.timestamps, tuple(names), probs, decisions, threshold)
    offset = label_offset(length, position)
    for seg in split_on_gaps(scaled, max_gap_s):
        starts = slide(seg, length, stride=1)
        if not starts:
            continue
        X = np.stack([scaled.values[:, s:s + length] for s in starts])
        p = predict_probabilities(model, X, batch_size)
        anchor = np.asarray(starts) + offset
        probs[:, anchor] = p.T
        decisions[:, anchor] = (p.T >= threshold).astype(np.int8)
    return PredictionTrack(frame.timestamps, tuple(names), probs, decisions, threshold)


def _runs(series: np.ndarray) -> list[list[int]]:
    """Maximal runs as [value, start, length] triples."""
    out: list[list[int]] = []
    for i, v in enumerate(series):
        if out and out[-1][0] == v:
            out[-1][2] += 1
        else:
            out.append([int(v), i, 1])
    return out


def _smooth_series(series: np.ndarray, width: int) -> np.ndarray:
    """Rectify spikes left to right, restarting after every flip, to fixpoint.

    Only 0/1 runs strictly shorter than ``width`` whose two flanking runs
    agree on a 0/1 value are flipped; edge runs and no-prediction markers are
    never touched (markers break runs).
    """
    d = series.copy()
    changed = True
    while changed:
        changed = False
        runs = _runs(d)
        for idx in range(1, len(runs) - 1):
            value, start, length = runs[idx]
            left = runs[idx - 1][0]
            right = runs[idx + 1][0]
            if (value in (0, 1) and length < width
                    and left == right and left in (0, 1)):
                d[start:start + length] = left
                changed = True
                break
    return d


def smooth(track: PredictionTrack, width: int) -> PredictionTrack:
    """Flip decision runs shorter than ``width`` between agreeing flanks.

    Probabilities are untouched; width 1 is the identity.
    """
    if width < 1:
        raise ConfigError("smoothing width must be >= 1")
    decisions = track.decisions.copy()
    if width > 1:
        for k in range(decisions.shape[0]):
            decisions[k] = _smooth_series(decisions[k], width)
    return PredictionTrack(track.timestamps, track.class_names,
                           track.probabilities.copy(), decisions, track.threshold)
