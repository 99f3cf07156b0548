"""Retrieve keyword intervals from an assembled multi-event audio file.

Builds a 25 s file (two tone events separated by near-silence), trains a
small model that includes a Silence class for the gaps, and prints the
intervals found for each keyword plus the cell-level evaluation table.
"""

import tempfile
from pathlib import Path

import numpy as np

from airtk.audio_io import AudioClip
from airtk.dataset import (GroundTruthTimeline, LabelSet, Ontology,
                           build_eval_file, make_synthetic_corpus,
                           parse_manifest, synth_class_signal,
                           synth_silence_signal)
from airtk.dsp import FrontendConfig
from airtk.embedding import builtin_source, features_for_entry
from airtk.forest import Hyperparameters, train
from airtk.retrieval import (evaluate_retrieval, predictions_for_clip,
                             rasterize, resolve_query, retrieve)

RATE = 16000
cfg = FrontendConfig()
ontology = Ontology(["Rapping", "Cheering", "Silence"])
work = Path(tempfile.mkdtemp(prefix="airtk_demo_"))

# training material: one-patch clips per class (Silence yields near-silent noise)
manifest_path, _ = make_synthetic_corpus(work, ontology, per_class=25,
                                         duration_s=0.975, rate_hz=RATE, seed=3)
entries, _ = parse_manifest(manifest_path, ontology)
cache = {}
X, y = [], []
for e in entries:
    for fv in features_for_entry(e, cfg, RATE, 3, _clip_cache=cache):
        X.append(fv)
        y.append(e.labels)
model = train(X, y, Hyperparameters(n_trees=20), seed=3, ontology=ontology,
              source=builtin_source(cfg), frontend_hash=cfg.config_hash(RATE))

# evaluation file: 5 s gap, 8 s Rapping, 4 s gap, 8 s Cheering
segments = []
for c, dur in ((0, 8.0), (1, 8.0)):
    samples = synth_class_signal(c, int(dur * RATE), RATE, seed=100 + c)
    bits = np.zeros(len(ontology), dtype=bool)
    bits[c] = True
    segments.append((AudioClip(f"seg{c}", samples, RATE), LabelSet(bits)))
clip, truth = build_eval_file(segments, [5.0, 4.0], work / "eval.wav")
print(f"eval file: {clip.duration_seconds:.2f} s, {truth.n_cells} grid cells\n")

for keyword in ("rapping", "cheering"):
    query = resolve_query(keyword, ontology, min_duration_s=0.5, merge_gap_s=0.3)
    result = retrieve(clip, model, query, cfg)
    print(f"query {keyword!r}:")
    print(result.to_csv())

timelines = rasterize(predictions_for_clip(clip, model, cfg),
                      clip.duration_seconds, threshold=0.5)
print(evaluate_retrieval(timelines, truth, ontology, [0, 1]).to_text())
