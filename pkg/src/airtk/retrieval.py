"""Keyword queries over patch predictions: timelines, intervals, scoring.

Patch probabilities are piecewise constant, so every 0.01 s cell simply
takes the probability of the unique patch covering it; cells at or above
the threshold are on.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .audio_io import AudioClip
from .dataset import GRID_CELL_S, GroundTruthTimeline, Ontology, normalize_token
from .dsp import FrontendConfig, cut_patches, melspectrogram
from .embedding import flat_features, stats_features
from .errors import CoverageGap, FrontendMismatch, LengthMismatch, NoMatch
from .forest import ForestModel, PatchPrediction, predict_batch
from .metrics import MetricsReport, confusion, report, row_from_counts


@dataclass
class ClassTimeline:
    class_index: int
    cells: np.ndarray  # uint8, 1 where prob >= threshold
    probs: np.ndarray  # float64, same length
    threshold: float

    @property
    def n_cells(self) -> int:
        return len(self.cells)


@dataclass(frozen=True)
class Query:
    text: str
    class_indices: tuple
    threshold: float = 0.5
    min_duration_s: float = 0.2
    merge_gap_s: float = 0.1


@dataclass
class IntervalSet:
    """Per class: sorted, non-overlapping (start_s, end_s, mean_confidence)."""

    ontology: Ontology
    intervals: dict = field(default_factory=dict)  # class_index -> list of tuples

    def rows(self):
        for c in sorted(self.intervals):
            for start_s, end_s, conf in self.intervals[c]:
                yield self.ontology.classes[c], start_s, end_s, conf

    def to_csv(self) -> str:
        out = ["class,start_s,end_s,confidence"]
        for name, start_s, end_s, conf in self.rows():
            quoted = f'"{name}"' if "," in name else name
            out.append(f"{quoted},{start_s:.3f},{end_s:.3f},{conf:.3f}")
        return "\n".join(out) + "\n"

    def to_json(self) -> str:
        payload = {
            self.ontology.classes[c]: [
                {"start_s": round(s, 3), "end_s": round(e, 3), "confidence": round(p, 3)}
                for s, e, p in self.intervals[c]
            ]
            for c in sorted(self.intervals)
        }
        return json.dumps(payload, indent=2, sort_keys=True)


def rasterize(predictions: list[PatchPrediction], duration_s: float, threshold: float) -> list[ClassTimeline]:
    """Spread patch probabilities onto the 0.01 s grid and binarize."""
    if not predictions:
        raise CoverageGap("no patch predictions")
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must be in (0, 1)")
    n_classes = len(predictions[0].probabilities)
    n_cells = int(round(duration_s / GRID_CELL_S))
    probs = np.full((n_classes, n_cells), np.nan)
    for p in predictions:
        i = int(round(p.start_s / GRID_CELL_S))
        j = min(int(round(p.end_s / GRID_CELL_S)), n_cells)  # padding past duration excluded
        if j > i:
            probs[:, i:j] = p.probabilities[:, None]
    uncovered = np.isnan(probs[0])
    if uncovered.any():
        raise CoverageGap(f"{int(uncovered.sum())} of {n_cells} cells covered by no patch")
    return [
        ClassTimeline(c, (probs[c] >= threshold).astype(np.uint8), probs[c], threshold)
        for c in range(n_classes)
    ]


def extract_intervals(timeline: ClassTimeline, min_duration_s: float = 0.0,
                      merge_gap_s: float = 0.0) -> list[tuple]:
    """Maximal 1-runs, merged across sub-gap holes, short ones dropped."""
    padded = np.concatenate([[0], timeline.cells, [0]])
    edges = np.flatnonzero(np.diff(padded))
    runs = [(int(i), int(j)) for i, j in zip(edges[::2], edges[1::2])]

    merged = []
    for i, j in runs:
        if merged and (i - merged[-1][1]) * GRID_CELL_S < merge_gap_s:
            merged[-1] = (merged[-1][0], j)
        else:
            merged.append((i, j))

    out = []
    for i, j in merged:
        if (j - i) * GRID_CELL_S < min_duration_s - 1e-9:
            continue
        out.append((i * GRID_CELL_S, j * GRID_CELL_S, float(timeline.probs[i:j].mean())))
    return out


def resolve_query(text: str, ontology: Ontology, threshold: float = 0.5,
                  min_duration_s: float = 0.2, merge_gap_s: float = 0.1) -> Query:
    """Lexical keyword match against class names and aliases; multilabel allowed."""
    if not text.strip():
        raise NoMatch("empty query")
    normalized = normalize_token(text)
    matches = set()
    if normalized in ontology.aliases:
        matches.add(ontology.aliases[normalized])
    for token in normalized.split():
        if token in ontology.aliases:
            matches.add(ontology.aliases[token])
    if not matches:
        raise NoMatch(f"{text!r} matches none of: {', '.join(ontology.classes)}")
    return Query(text, tuple(sorted(matches)), threshold, min_duration_s, merge_gap_s)


def predictions_for_clip(clip: AudioClip, model: ForestModel, cfg: FrontendConfig,
                         features=None) -> list[PatchPrediction]:
    """Frontend + forest for one clip; external features may be supplied directly."""
    if model.frontend_hash and model.frontend_hash != cfg.config_hash(clip.sample_rate_hz):
        raise FrontendMismatch("model was trained under a different frontend configuration")
    if features is None:
        if model.source.kind == "external_file":
            raise ValueError("model uses external embeddings; pass features explicitly")
        extract = flat_features if model.source.kind == "builtin_flat" else stats_features
        features = [extract(p) for p in cut_patches(melspectrogram(clip, cfg), cfg)]
    return predict_batch(model, features)


def retrieve(clip: AudioClip, model: ForestModel, query: Query,
             cfg: FrontendConfig = FrontendConfig(), features=None) -> IntervalSet:
    """End-to-end: clip -> patches -> probabilities -> queried-class intervals."""
    predictions = predictions_for_clip(clip, model, cfg, features)
    timelines = rasterize(predictions, clip.duration_seconds, query.threshold)
    return IntervalSet(
        model.ontology,
        {
            c: extract_intervals(timelines[c], query.min_duration_s, query.merge_gap_s)
            for c in query.class_indices
        },
    )


def evaluate_retrieval(timelines: list[ClassTimeline], truth: GroundTruthTimeline,
                       ontology: Ontology, class_indices=None) -> MetricsReport:
    """Cell-level confusion and the five metrics per queried class, plus a mean row."""
    if class_indices is None:
        class_indices = [t.class_index for t in timelines]
    by_index = {t.class_index: t for t in timelines}
    per_class = {}
    for c in class_indices:
        t = by_index[c]
        truth_row = truth.cells[c]
        if t.n_cells != len(truth_row):
            raise LengthMismatch(f"predicted {t.n_cells} cells, truth has {len(truth_row)}")
        counts = confusion(t.cells, truth_row)
        per_class[ontology.classes[c]] = row_from_counts(counts, t.probs, truth_row)
    return report(per_class)
