"""Train a patch classifier on a synthetic tone corpus and print its holdout report.

Walks the library path end to end: corpus -> manifest -> features -> forest.
Everything is seeded, so re-running prints the same table.
"""

import tempfile
from pathlib import Path

from airtk.cli import classification_report
from airtk.dataset import Ontology, make_synthetic_corpus, parse_manifest, split
from airtk.dsp import FrontendConfig
from airtk.embedding import builtin_source, features_for_entry
from airtk.forest import Hyperparameters, train

RATE = 16000
cfg = FrontendConfig()

work = Path(tempfile.mkdtemp(prefix="airtk_demo_"))
manifest_path, _ = make_synthetic_corpus(work, Ontology(), per_class=30,
                                         duration_s=0.975, rate_hz=RATE, seed=7)
entries, _ = parse_manifest(manifest_path, Ontology())
train_entries, eval_entries = split(entries, 0.8, seed=7)


def featurize(entries):
    cache = {}
    X, y = [], []
    for e in entries:
        for fv in features_for_entry(e, cfg, RATE, 7, _clip_cache=cache):
            X.append(fv)
            y.append(e.labels)
    return X, y


X_train, y_train = featurize(train_entries)
X_eval, y_eval = featurize(eval_entries)

model = train(X_train, y_train, Hyperparameters(n_trees=30), seed=7,
              ontology=Ontology(), source=builtin_source(cfg),
              frontend_hash=cfg.config_hash(RATE))

print(f"{len(X_train)} training patches, {len(X_eval)} holdout patches\n")
print(classification_report(model, X_eval, y_eval, threshold=0.5).to_text())
