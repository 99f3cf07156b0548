"""Command-line surface: featurize, train, query, eval, mkeval, convert.

Exit codes: 0 success, 2 input/config error, 3 query matched no class,
4 internal invariant violation. Every randomized step takes an explicit
seed, so identical invocations produce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audio_io import CANONICAL_RATE_HZ, load_wav, trim
from .dataset import (
    GroundTruthTimeline,
    LabelSet,
    Ontology,
    balance_classes,
    build_eval_file,
    convert_audioset_manifest,
    parse_manifest,
    split,
)
from .dsp import FrontendConfig, MelSpectrogram, cut_patches, export_spectrogram, melspectrogram
from .embedding import (
    builtin_source,
    features_for_entry,
    load_external_embeddings,
    read_embeddings,
    write_embeddings,
)
from .errors import AirtkError, EmptyInput, GridMismatch, NoMatch
from .forest import EmbeddingSource, Hyperparameters, load as load_model, save as save_model, train
from .metrics import confusion, report, row_from_counts
from .retrieval import (
    evaluate_retrieval,
    predictions_for_clip,
    rasterize,
    resolve_query,
    retrieve,
)

log = logging.getLogger("airtk")

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib


@dataclasses.dataclass
class RunConfig:
    frontend: FrontendConfig = dataclasses.field(default_factory=FrontendConfig)
    hp: Hyperparameters = dataclasses.field(default_factory=Hyperparameters)
    seed: int = 0
    threshold: float = 0.5
    train_fraction: float = 0.8
    strict_labels: bool = False
    balance_target: int = 0  # 0 disables augmentation balancing
    sample_rate_hz: int = CANONICAL_RATE_HZ
    classes: tuple = ()

    def ontology(self) -> Ontology:
        return Ontology(self.classes) if self.classes else Ontology()

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["classes"] = list(self.ontology().classes)
        return d


def load_run_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        with open(args.config, "rb") as f:
            data = tomllib.load(f)
        cfg = RunConfig(
            frontend=FrontendConfig(**data.get("frontend", {})),
            hp=Hyperparameters(**data.get("forest", {})),
            **data.get("run", {}),
        )
    # flag overrides
    overrides = {}
    for name in ("seed", "threshold", "train_fraction", "strict_labels", "balance_target", "sample_rate_hz"):
        v = getattr(args, name, None)
        if v is not None:
            overrides[name] = v
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    if getattr(args, "trees", None) is not None:
        cfg = dataclasses.replace(cfg, hp=dataclasses.replace(cfg.hp, n_trees=args.trees))
    if getattr(args, "patch_frames", None) is not None:
        cfg = dataclasses.replace(cfg, frontend=dataclasses.replace(cfg.frontend, patch_frames=args.patch_frames))
    return cfg


def write_provenance(artifact_path, cfg: RunConfig) -> None:
    payload = {"tool": "airtk", "version": __version__, "run_config": cfg.to_dict()}
    Path(str(artifact_path) + ".run.json").write_text(json.dumps(payload, indent=2, sort_keys=True))


def _entry_features(entries, cfg: RunConfig, external=None):
    """Feature vectors and per-patch labels for manifest entries.

    With external embeddings, rows are joined to entries by clip id; balancing
    recipes require audio access and are only possible with builtin features.
    """
    features, labels = [], []
    if external is not None:
        by_clip = {}
        for fv in external:
            by_clip.setdefault(fv.clip_id, []).append(fv)
        for e in entries:
            if e.recipe is not None:
                raise GridMismatch("balance augmentation is unsupported with external embeddings")
            rows = sorted(by_clip.get(e.clip_id, []), key=lambda f: f.patch_index)
            if not rows:
                raise GridMismatch(f"no embedding rows for clip {e.clip_id!r}")
            features.extend(rows)
            labels.extend([e.labels] * len(rows))
        return features, labels

    cache = {}
    for e in entries:
        fvs = features_for_entry(e, cfg.frontend, cfg.sample_rate_hz, cfg.seed, _clip_cache=cache)
        features.extend(fvs)
        labels.extend([e.labels] * len(fvs))
    return features, labels


def classification_report(model, features, labels, threshold: float):
    """Holdout report: five metrics per class plus a mean column."""
    from .forest import predict_batch

    preds = predict_batch(model, features)
    probs = np.stack([p.probabilities for p in preds])
    truth = np.stack([l.bits for l in labels])
    per_class = {}
    for c, name in enumerate(model.ontology.classes):
        counts = confusion(probs[:, c] >= threshold, truth[:, c])
        per_class[name] = row_from_counts(counts, probs[:, c], truth[:, c])
    return report(per_class)


# --- subcommands ------------------------------------------------------------


def cmd_featurize(args) -> int:
    cfg = load_run_config(args)
    ontology = cfg.ontology()
    entries, skipped = parse_manifest(args.manifest, ontology, strict=cfg.strict_labels)
    if skipped:
        log.warning("%d manifest rows skipped (no recognized labels)", skipped)
    if not entries:
        raise EmptyInput(f"{args.manifest}: no usable entries")

    cache = {}
    features = []
    grid = []
    for e in entries:
        fvs = features_for_entry(e, cfg.frontend, cfg.sample_rate_hz, cfg.seed, _clip_cache=cache)
        features.extend(fvs)
        grid.extend(fvs)

    if args.embeddings:
        # validate an externally produced file against the patch grid
        rows = read_embeddings(args.embeddings)
        expected = {(f.clip_id, f.patch_index) for f in grid}
        got = {(f.clip_id, f.patch_index) for f in rows}
        if expected != got:
            raise GridMismatch(f"{args.embeddings}: rows do not match the manifest patch grid")
        log.info("external embeddings validated against %d patches", len(grid))

    write_embeddings(features, args.out)
    with open(Path(args.out).with_suffix(".grid.csv"), "w") as f:
        f.write("clip_id,patch_index,start_s,end_s\n")
        for fv in sorted(grid, key=lambda x: (x.clip_id, x.patch_index)):
            f.write(f"{fv.clip_id},{fv.patch_index},{fv.start_s:.9g},{fv.end_s:.9g}\n")
    write_provenance(args.out, cfg)
    print(f"wrote {len(features)} feature rows to {args.out}")
    return 0


def cmd_train(args) -> int:
    cfg = load_run_config(args)
    ontology = cfg.ontology()
    entries, skipped = parse_manifest(args.manifest, ontology, strict=cfg.strict_labels)
    if skipped:
        log.warning("%d manifest rows skipped", skipped)
    if not entries:
        raise EmptyInput(f"{args.manifest}: no usable entries")

    train_entries, eval_entries = split(entries, cfg.train_fraction, cfg.seed)
    if cfg.balance_target:
        train_entries = balance_classes(train_entries, cfg.balance_target, cfg.seed)

    external = read_embeddings(args.embeddings) if args.embeddings else None
    X_train, y_train = _entry_features(train_entries, cfg, external)
    X_eval, y_eval = _entry_features(eval_entries, cfg, external)

    if external is not None:
        source = EmbeddingSource("external_file", X_train[0].dimension, str(args.embeddings))
        frontend_hash = ""
    else:
        source = builtin_source(cfg.frontend)
        frontend_hash = cfg.frontend.config_hash(cfg.sample_rate_hz)

    model = train(X_train, y_train, cfg.hp, cfg.seed, ontology=ontology,
                  source=source, frontend_hash=frontend_hash)
    save_model(model, args.out)
    write_provenance(args.out, cfg)

    rep = classification_report(model, X_eval, y_eval, cfg.threshold)
    base = Path(args.out)
    base.with_suffix(".report.txt").write_text(rep.to_text() + "\n")
    base.with_suffix(".report.json").write_text(rep.to_json() + "\n")
    print(rep.to_text())
    return 0


def cmd_query(args) -> int:
    cfg = load_run_config(args)
    model = load_model(args.model)
    clip = load_wav(args.audio, cfg.sample_rate_hz)
    query = resolve_query(args.keyword, model.ontology, threshold=cfg.threshold,
                          min_duration_s=args.min_duration, merge_gap_s=args.merge_gap)
    features = None
    if args.embeddings:
        expected = cut_patches(melspectrogram(clip, cfg.frontend), cfg.frontend)
        features = load_external_embeddings(args.embeddings, expected)
    result = retrieve(clip, model, query, cfg.frontend, features)
    output = result.to_json() + "\n" if args.json else result.to_csv()
    if args.out:
        Path(args.out).write_text(output)
        write_provenance(args.out, cfg)
    sys.stdout.write(output)
    return 0


def cmd_eval(args) -> int:
    cfg = load_run_config(args)
    model = load_model(args.model)
    clip = load_wav(args.audio, cfg.sample_rate_hz)
    truth = GroundTruthTimeline.from_intervals_csv(args.truth, model.ontology, clip.duration_seconds)

    class_indices = []
    for kw in args.keywords:
        q = resolve_query(kw, model.ontology)
        class_indices.extend(i for i in q.class_indices if i not in class_indices)

    features = None
    if args.embeddings:
        expected = cut_patches(melspectrogram(clip, cfg.frontend), cfg.frontend)
        features = load_external_embeddings(args.embeddings, expected)
    predictions = predictions_for_clip(clip, model, cfg.frontend, features)
    timelines = rasterize(predictions, clip.duration_seconds, cfg.threshold)
    rep = evaluate_retrieval(timelines, truth, model.ontology, class_indices)

    base = Path(args.out)
    base.with_suffix(".txt").write_text(rep.to_text() + "\n")
    base.with_suffix(".json").write_text(rep.to_json() + "\n")
    write_provenance(args.out, cfg)
    print(rep.to_text())
    return 0


def cmd_mkeval(args) -> int:
    cfg = load_run_config(args)
    ontology = cfg.ontology()
    segments = []
    gaps = []
    import csv as _csv

    with open(args.segments, newline="") as f:
        reader = _csv.DictReader(f)
        for row in reader:
            clip = load_wav(row["path"], cfg.sample_rate_hz)
            start_s, end_s = float(row["start_s"]), float(row["end_s"])
            if start_s > 0 or end_s < clip.duration_seconds - 1e-9:
                clip = trim(clip, start_s, min(end_s, clip.duration_seconds))
            labels = LabelSet.from_names(row["labels"].split("|"), ontology)
            segments.append((clip, labels))
            gaps.append(float(row.get("gap_before_s") or 0.0))
    if not segments:
        raise EmptyInput(f"{args.segments}: no segments")

    clip, truth = build_eval_file(segments, gaps, args.out)
    truth.write_intervals_csv(Path(args.out).with_suffix(".truth.csv"), ontology)
    export_spectrogram(melspectrogram(clip, cfg.frontend), Path(args.out).with_suffix(".mel"))
    write_provenance(args.out, cfg)
    print(f"wrote {clip.duration_seconds:.2f} s eval file to {args.out} "
          f"({truth.n_cells} grid cells)")
    return 0


def cmd_convert(args) -> int:
    cfg = load_run_config(args)
    n = convert_audioset_manifest(args.src, args.out, cfg.ontology(), args.audio_dir)
    print(f"wrote {n} manifest rows to {args.out}")
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airtk", description=__doc__)
    parser.add_argument("--version", action="version", version=f"airtk {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--threshold", type=float)
        p.add_argument("--sample-rate-hz", type=int, dest="sample_rate_hz")
        p.add_argument("--patch-frames", type=int, dest="patch_frames")

    p = sub.add_parser("featurize", help="write builtin AIREMB1 features for a manifest")
    common(p)
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", help="external AIREMB1 file to validate against the grid")
    p.add_argument("--strict-labels", action="store_true", dest="strict_labels", default=None)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", help="split, optionally balance, and train a forest")
    common(p)
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--embeddings", help="train on an external AIREMB1 file")
    p.add_argument("--train-fraction", type=float, dest="train_fraction")
    p.add_argument("--balance-target", type=int, dest="balance_target")
    p.add_argument("--trees", type=int)
    p.add_argument("--strict-labels", action="store_true", dest="strict_labels", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("query", help="retrieve intervals for a keyword")
    common(p)
    p.add_argument("audio")
    p.add_argument("model")
    p.add_argument("keyword")
    p.add_argument("--embeddings")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out")
    p.add_argument("--min-duration", type=float, default=0.2)
    p.add_argument("--merge-gap", type=float, default=0.1)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval", help="score retrieval against a ground-truth CSV")
    common(p)
    p.add_argument("audio")
    p.add_argument("truth")
    p.add_argument("model")
    p.add_argument("keywords", nargs="+")
    p.add_argument("--embeddings")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("mkeval", help="build a labeled evaluation WAV from segments")
    common(p)
    p.add_argument("segments", help="CSV: path,start_s,end_s,labels,gap_before_s")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mkeval)

    p = sub.add_parser("convert-audioset-manifest", help="AudioSet 4-column CSV -> local manifest")
    common(p)
    p.add_argument("src")
    p.add_argument("--out", required=True)
    p.add_argument("--audio-dir", default=".")
    p.set_defaults(func=cmd_convert)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("AIR_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NoMatch as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (AirtkError, OSError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # invariant violation
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
