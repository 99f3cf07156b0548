"""Manifests, the 6-class ontology, splitting, augmentation and eval-file building.

A manifest is a local CSV with header ``clip_id,path,start_s,end_s,labels``
(labels pipe-separated class names, quoted when they contain commas).
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, save_wav
from .errors import (
    EmptyClass,
    EmptyInput,
    InvalidRecipe,
    IoError,
    MalformedRow,
    OutOfRange,
    UnknownClassStrict,
)
from .seeding import derive_seed

log = logging.getLogger("airtk.dataset")

DEFAULT_CLASSES = ("Rapping", "Cheering", "Gunshot, gunfire", "Radio", "Cat", "Helicopter")

GRID_CELL_S = 0.01


def normalize_token(text: str) -> str:
    return re.sub(r"[^a-z0-9 ]+", " ", text.lower()).strip()


class Ontology:
    """Ordered class list plus an alias table for keyword resolution."""

    def __init__(self, classes=DEFAULT_CLASSES, aliases: dict[str, str] | None = None):
        self.classes = list(classes)
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class names must be unique")
        self.aliases: dict[str, int] = {}
        for i, name in enumerate(self.classes):
            self.aliases[normalize_token(name)] = i
            for token in normalize_token(name).split():
                self.aliases.setdefault(token, i)
        for alias, name in (aliases or {}).items():
            self.aliases[normalize_token(alias)] = self.classes.index(name)

    def __len__(self) -> int:
        return len(self.classes)

    def index_of(self, name: str) -> int | None:
        return self.aliases.get(normalize_token(name))


class LabelSet:
    """Boolean membership vector over an ontology's classes."""

    def __init__(self, bits):
        self.bits = np.asarray(bits, dtype=bool)

    @classmethod
    def from_names(cls, names, ontology: Ontology) -> "LabelSet":
        bits = np.zeros(len(ontology), dtype=bool)
        for name in names:
            idx = ontology.index_of(name)
            if idx is not None:
                bits[idx] = True
        return cls(bits)

    def to_names(self, ontology: Ontology) -> list[str]:
        return [ontology.classes[i] for i in np.flatnonzero(self.bits)]

    @property
    def any(self) -> bool:
        return bool(self.bits.any())

    def __eq__(self, other) -> bool:
        return isinstance(other, LabelSet) and np.array_equal(self.bits, other.bits)

    def __repr__(self) -> str:
        return f"LabelSet({self.bits.astype(int).tolist()})"


@dataclass(frozen=True)
class AugmentationRecipe:
    """Label-preserving waveform edits: circular shift, gain, additive noise."""

    time_shift_s: float = 0.0
    gain_db: float = 0.0
    snr_db: float | None = None

    def validate(self) -> None:
        for v in (self.time_shift_s, self.gain_db):
            if not np.isfinite(v):
                raise InvalidRecipe(f"non-finite recipe parameter: {self}")
        if self.snr_db is not None and not np.isfinite(self.snr_db):
            raise InvalidRecipe(f"non-finite snr_db: {self}")

    @property
    def is_identity(self) -> bool:
        return self.time_shift_s == 0.0 and self.gain_db == 0.0 and self.snr_db is None


@dataclass(frozen=True)
class ManifestEntry:
    clip_id: str
    path: str
    start_s: float
    end_s: float
    labels: LabelSet
    recipe: AugmentationRecipe | None = None  # set on balance-generated copies

    def __post_init__(self):
        if not self.path:
            raise ValueError("path must be nonempty")
        if not self.start_s < self.end_s:
            raise ValueError(f"{self.clip_id}: start_s must be < end_s")


def parse_manifest(path, ontology: Ontology, strict: bool = False):
    """Read a manifest CSV. Returns (entries, skipped_row_count).

    Rows whose labels all fall outside the ontology are skipped in lenient
    mode (counted and logged); in strict mode any unknown label aborts.
    """
    entries = []
    skipped = 0
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["clip_id", "path", "start_s", "end_s", "labels"]:
            raise MalformedRow(f"{path}: bad or missing header")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise MalformedRow(f"{path}:{lineno}: expected 5 fields, got {len(row)}")
            clip_id, clip_path, start_raw, end_raw, labels_raw = row
            try:
                start_s, end_s = float(start_raw), float(end_raw)
            except ValueError as e:
                raise MalformedRow(f"{path}:{lineno}: {e}") from e
            names = [t for t in labels_raw.split("|") if t]
            if strict:
                for name in names:
                    if ontology.index_of(name) is None:
                        raise UnknownClassStrict(f"{path}:{lineno}: unknown label {name!r}")
            labels = LabelSet.from_names(names, ontology)
            if not labels.any:
                skipped += 1
                log.warning("%s:%d: no recognized labels, row skipped", path, lineno)
                continue
            try:
                entries.append(ManifestEntry(clip_id, clip_path, start_s, end_s, labels))
            except ValueError as e:
                raise MalformedRow(f"{path}:{lineno}: {e}") from e
    return entries, skipped


def write_manifest(entries, path, ontology: Ontology) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["clip_id", "path", "start_s", "end_s", "labels"])
        for e in entries:
            writer.writerow([e.clip_id, e.path, repr(e.start_s), repr(e.end_s), "|".join(e.labels.to_names(ontology))])


def convert_audioset_manifest(src_path, out_path, ontology: Ontology, audio_dir: str = ".") -> int:
    """Convert AudioSet's 4-column segment CSV to the local manifest format.

    Labels that do not resolve through the ontology alias table are dropped;
    rows left with no labels are skipped. Returns the number of rows written.
    """
    rows = []
    with open(src_path, newline="") as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = next(csv.reader([line], skipinitialspace=True))
            if len(parts) < 4:
                raise MalformedRow(f"{src_path}: expected 4 fields in {line!r}")
            ytid, start_raw, end_raw = parts[0], parts[1], parts[2]
            label_blob = ",".join(parts[3:])
            names = [t.strip() for t in label_blob.split(",") if t.strip()]
            labels = LabelSet.from_names(names, ontology)
            if not labels.any:
                continue
            rows.append(
                ManifestEntry(ytid, str(Path(audio_dir) / f"{ytid}.wav"), float(start_raw), float(end_raw), labels)
            )
    write_manifest(rows, out_path, ontology)
    return len(rows)


def split(entries, train_fraction: float, seed: int):
    """Deterministic random partition; |train| = round-half-up(fraction * N)."""
    if not entries:
        raise EmptyInput("cannot split an empty entry list")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    n = len(entries)
    n_train = int(np.floor(train_fraction * n + 0.5))
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = np.sort(perm[:n_train])
    eval_idx = np.sort(perm[n_train:])
    return [entries[i] for i in train_idx], [entries[i] for i in eval_idx]


def augment(clip: AudioClip, recipe: AugmentationRecipe, seed: int) -> AudioClip:
    """Apply a recipe; duration and sample rate are always preserved."""
    recipe.validate()
    x = clip.samples
    if recipe.time_shift_s != 0.0:
        x = np.roll(x, int(round(recipe.time_shift_s * clip.sample_rate_hz)))
    if recipe.gain_db != 0.0:
        x = x * 10.0 ** (recipe.gain_db / 20.0)
    if recipe.snr_db is not None:
        signal_power = float(np.mean(np.square(x)))
        noise_power = signal_power / 10.0 ** (recipe.snr_db / 10.0)
        rng = np.random.default_rng(seed)
        x = x + rng.normal(0.0, np.sqrt(noise_power), size=len(x))
    if x is clip.samples:
        x = x.copy()
    return clip.with_samples(x)


def _random_recipe(rng: np.random.Generator) -> AugmentationRecipe:
    return AugmentationRecipe(
        time_shift_s=float(rng.uniform(-0.4, 0.4)),
        gain_db=float(rng.uniform(-6.0, 6.0)),
        snr_db=float(rng.uniform(15.0, 30.0)),
    )


def balance_classes(entries, per_class_target: int, seed: int):
    """Top every class up to ~per_class_target positives with augmented copies.

    Copies get fresh clip_ids suffixed ``#augK`` and carry the recipe that
    produces them from the original audio. Classes already at or above the
    target are left alone.
    """
    if not entries:
        raise EmptyInput("cannot balance an empty entry list")
    n_classes = len(entries[0].labels.bits)
    out = list(entries)
    for c in range(n_classes):
        originals = [e for e in entries if e.labels.bits[c]]
        count = sum(1 for e in out if e.labels.bits[c])
        needed = per_class_target - count
        if needed <= 0:
            continue
        if not originals:
            raise EmptyClass(f"class index {c} has no original samples to augment")
        rng = np.random.default_rng(derive_seed(seed, "balance", c))
        for k in range(needed):
            base = originals[k % len(originals)]
            out.append(
                replace(
                    base,
                    clip_id=f"{base.clip_id}#aug{k}",
                    recipe=_random_recipe(rng),
                )
            )
    return out


@dataclass
class GroundTruthTimeline:
    """Per-class binary arrays on the 0.01 s grid."""

    cells: np.ndarray  # (n_classes, n_cells) uint8
    cell_s: float = GRID_CELL_S

    @property
    def n_cells(self) -> int:
        return self.cells.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_cells * self.cell_s

    def intervals(self, ontology: Ontology):
        """Yield (class_name, start_s, end_s) for each labeled run."""
        for c, row in enumerate(self.cells):
            padded = np.concatenate([[0], row, [0]])
            edges = np.flatnonzero(np.diff(padded))
            for i, j in zip(edges[::2], edges[1::2]):
                yield ontology.classes[c], i * self.cell_s, j * self.cell_s

    def write_intervals_csv(self, path, ontology: Ontology) -> None:
        try:
            with open(path, "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["class", "start_s", "end_s"])
                for name, start_s, end_s in self.intervals(ontology):
                    writer.writerow([name, f"{start_s:.3f}", f"{end_s:.3f}"])
        except OSError as e:
            raise IoError(str(e)) from e

    @classmethod
    def from_intervals_csv(cls, path, ontology: Ontology, duration_s: float) -> "GroundTruthTimeline":
        n_cells = int(round(duration_s / GRID_CELL_S))
        cells = np.zeros((len(ontology), n_cells), dtype=np.uint8)
        with open(path, newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["class", "start_s", "end_s"]:
                raise MalformedRow(f"{path}: bad or missing header")
            for row in reader:
                if not row:
                    continue
                if len(row) != 3:
                    raise MalformedRow(f"{path}: expected 3 fields, got {row!r}")
                idx = ontology.index_of(row[0])
                if idx is None:
                    raise MalformedRow(f"{path}: unknown class {row[0]!r}")
                i = int(round(float(row[1]) / GRID_CELL_S))
                j = int(round(float(row[2]) / GRID_CELL_S))
                if not 0 <= i < j <= n_cells:
                    raise OutOfRange(f"{path}: interval {row} outside [0, {duration_s}]")
                cells[idx, i:j] = 1
        return cls(cells)


def build_eval_file(segments, gap_s, out_path):
    """Concatenate labeled segments with leading silent gaps into one WAV.

    ``segments`` is a sequence of (AudioClip, LabelSet); ``gap_s`` is either a
    scalar gap placed before every segment or one gap length per segment.
    Returns the assembled clip and its exact ground-truth timeline.
    """
    if not segments:
        raise EmptyInput("need at least one segment")
    rate = segments[0][0].sample_rate_hz
    if any(clip.sample_rate_hz != rate for clip, _ in segments):
        raise ValueError("all segments must share one sample rate")
    gaps = [float(gap_s)] * len(segments) if np.isscalar(gap_s) else [float(g) for g in gap_s]
    if len(gaps) != len(segments) or any(g < 0 for g in gaps):
        raise ValueError("need one non-negative gap per segment")

    n_classes = len(segments[0][1].bits)
    pieces = []
    spans = []  # (labels, start_cell, end_cell)
    cursor = 0
    for gap, (clip, labels) in zip(gaps, segments):
        gap_samples = int(round(gap * rate))
        pieces.append(np.zeros(gap_samples))
        cursor += gap_samples
        pieces.append(clip.samples)
        start_cell = int(round(cursor / rate / GRID_CELL_S))
        cursor += len(clip.samples)
        end_cell = int(round(cursor / rate / GRID_CELL_S))
        spans.append((labels, start_cell, end_cell))

    samples = np.concatenate(pieces)
    n_cells = int(round(len(samples) / rate / GRID_CELL_S))
    cells = np.zeros((n_classes, n_cells), dtype=np.uint8)
    for labels, i, j in spans:
        for c in np.flatnonzero(labels.bits):
            cells[c, i:min(j, n_cells)] = 1

    try:
        save_wav(out_path, samples, rate)
    except OSError as e:
        raise IoError(str(e)) from e
    clip = AudioClip(clip_id=Path(out_path).stem, samples=np.clip(samples, -1.0, 1.0),
                     sample_rate_hz=rate, source_path=str(out_path))
    return clip, GroundTruthTimeline(cells)


# --- synthetic corpus -------------------------------------------------------

# One fundamental per default class, spread across the mel range so the
# classes have clearly distinct spectral signatures.
SYNTH_TONE_HZ = (330.0, 660.0, 1250.0, 2200.0, 3400.0, 5200.0)


def synth_class_signal(class_index: int, n_samples: int, rate_hz: int, seed: int) -> np.ndarray:
    """Band-limited tone burst with a weak second harmonic and noise floor."""
    rng = np.random.default_rng(seed)
    f0 = SYNTH_TONE_HZ[class_index % len(SYNTH_TONE_HZ)] * (1.0 + rng.uniform(-0.02, 0.02))
    t = np.arange(n_samples) / rate_hz
    amp = rng.uniform(0.3, 0.7)
    x = amp * np.sin(2 * np.pi * f0 * t + rng.uniform(0, 2 * np.pi))
    x += 0.3 * amp * np.sin(2 * np.pi * 2 * f0 * t + rng.uniform(0, 2 * np.pi))
    x += rng.normal(0.0, 0.01, n_samples)
    return np.clip(x, -1.0, 1.0)


def synth_silence_signal(n_samples: int, seed: int) -> np.ndarray:
    """Near-silent noise floor; negative material for every sound class."""
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, 0.002, n_samples)


def synth_clip(class_index: int, duration_s: float, rate_hz: int, seed: int, clip_id: str) -> AudioClip:
    n = int(round(duration_s * rate_hz))
    return AudioClip(clip_id=clip_id, samples=synth_class_signal(class_index, n, rate_hz, seed),
                     sample_rate_hz=rate_hz)


def make_synthetic_corpus(out_dir, ontology: Ontology, per_class: int, duration_s: float,
                          rate_hz: int, seed: int):
    """Write per_class WAVs for every ontology class plus a manifest CSV.

    Returns (manifest_path, entries).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    n = int(round(duration_s * rate_hz))
    for c, name in enumerate(ontology.classes):
        bits = np.zeros(len(ontology), dtype=bool)
        bits[c] = True
        silent = normalize_token(name) == "silence"
        for k in range(per_class):
            clip_id = f"syn_c{c}_{k:04d}"
            sub_seed = derive_seed(seed, "synth", c, k)
            samples = synth_silence_signal(n, sub_seed) if silent \
                else synth_class_signal(c, n, rate_hz, sub_seed)
            wav_path = out_dir / f"{clip_id}.wav"
            save_wav(wav_path, samples, rate_hz)
            entries.append(ManifestEntry(clip_id, str(wav_path), 0.0, duration_s, LabelSet(bits)))
    manifest_path = out_dir / "manifest.csv"
    write_manifest(entries, manifest_path, ontology)
    return manifest_path, entries
