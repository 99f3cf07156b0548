"""Per-patch feature vectors: built-in spectral statistics or external files.

External deep embeddings enter through the AIREMB1 text format:

    AIREMB1 <d>
    clip_id,patch_index,start_s,end_s,v1,...,vd

one header line, then one CSV row per patch in (clip_id, patch_index) order.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, load_wav, trim
from .dataset import ManifestEntry, augment
from .dsp import FrontendConfig, Patch, cut_patches, melspectrogram
from .errors import DimensionMismatch, GridMismatch, IoError, MalformedFile
from .seeding import derive_seed

EMBEDDING_MAGIC = "AIREMB1"

_TIMING_TOL_S = 1e-3


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    clip_id: str
    patch_index: int
    start_s: float
    end_s: float

    @property
    def dimension(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class EmbeddingSource:
    kind: str  # "builtin_stats" | "builtin_flat" | "external_file"
    dimension: int
    descriptor: str = ""

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("embedding dimension must be positive")


def builtin_source(cfg: FrontendConfig, flat: bool = False) -> EmbeddingSource:
    if flat:
        return EmbeddingSource("builtin_flat", cfg.patch_frames * cfg.n_mels, "flattened log-mel patch")
    return EmbeddingSource("builtin_stats", 4 * cfg.n_mels, "per-band mean/std/min/max")


def stats_features(patch: Patch) -> FeatureVector:
    """Per-mel-band mean, std, min, max over the patch's real (unpadded) frames."""
    v = patch.values[: patch.n_valid_frames]
    values = np.concatenate([v.mean(axis=0), v.std(axis=0), v.min(axis=0), v.max(axis=0)])
    return FeatureVector(values, patch.clip_id, patch.patch_index, patch.start_s, patch.end_s)


def flat_features(patch: Patch) -> FeatureVector:
    """Flattened patch (padding kept so the dimension is constant)."""
    return FeatureVector(patch.values.reshape(-1).copy(), patch.clip_id, patch.patch_index,
                         patch.start_s, patch.end_s)


def features_for_entry(entry: ManifestEntry, cfg: FrontendConfig, target_rate_hz: int,
                       master_seed: int = 0, flat: bool = False,
                       _clip_cache: dict | None = None) -> list[FeatureVector]:
    """Full frontend for one manifest entry: load, trim, augment, patch, featurize."""
    if _clip_cache is not None and entry.path in _clip_cache:
        clip = _clip_cache[entry.path]
    else:
        clip = load_wav(entry.path, target_rate_hz)
        if _clip_cache is not None:
            _clip_cache[entry.path] = clip
    if entry.start_s > 0 or entry.end_s < clip.duration_seconds - 1e-9:
        clip = trim(clip, entry.start_s, min(entry.end_s, clip.duration_seconds))
    if entry.recipe is not None:
        clip = augment(clip, entry.recipe, derive_seed(master_seed, "augment", entry.clip_id))
    if clip.clip_id != entry.clip_id:
        clip = AudioClip(entry.clip_id, clip.samples, clip.sample_rate_hz, clip.source_path)
    spec = melspectrogram(clip, cfg)
    extract = flat_features if flat else stats_features
    return [extract(p) for p in cut_patches(spec, cfg)]


def write_embeddings(features: list[FeatureVector], path) -> None:
    """Write an AIREMB1 file; rows are emitted in (clip_id, patch_index) order."""
    if not features:
        raise ValueError("no feature vectors to write")
    d = features[0].dimension
    if any(f.dimension != d for f in features):
        raise DimensionMismatch("feature vectors have unequal dimensions")
    ordered = sorted(features, key=lambda f: (f.clip_id, f.patch_index))
    try:
        with open(path, "w", newline="\n") as f:
            f.write(f"{EMBEDDING_MAGIC} {d}\n")
            for fv in ordered:
                vals = ",".join(f"{v:.9g}" for v in fv.values)
                f.write(f"{fv.clip_id},{fv.patch_index},{fv.start_s:.9g},{fv.end_s:.9g},{vals}\n")
    except OSError as e:
        raise IoError(str(e)) from e


def read_embeddings(path) -> list[FeatureVector]:
    """Read an AIREMB1 file without grid validation."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise IoError(str(e)) from e
    if not lines:
        raise MalformedFile(f"{path}: empty file")
    header = lines[0].split()
    if len(header) != 2 or header[0] != EMBEDDING_MAGIC:
        raise MalformedFile(f"{path}: bad header {lines[0]!r}")
    try:
        d = int(header[1])
    except ValueError as e:
        raise MalformedFile(f"{path}: bad dimension in header") from e
    if d <= 0:
        raise MalformedFile(f"{path}: non-positive dimension")

    features = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4 + d:
            raise DimensionMismatch(f"{path}:{lineno}: expected {4 + d} fields, got {len(parts)}")
        try:
            features.append(
                FeatureVector(
                    values=np.array([float(v) for v in parts[4:]]),
                    clip_id=parts[0],
                    patch_index=int(parts[1]),
                    start_s=float(parts[2]),
                    end_s=float(parts[3]),
                )
            )
        except ValueError as e:
            raise MalformedFile(f"{path}:{lineno}: {e}") from e
    return features


def load_external_embeddings(path, expected_grid: list[Patch]) -> list[FeatureVector]:
    """Read an AIREMB1 file and check it against the expected patch grid.

    The file must contain exactly one row per expected patch, in patch order,
    with timing agreeing within 1 ms.
    """
    features = read_embeddings(path)
    if len(features) != len(expected_grid):
        raise GridMismatch(f"{path}: {len(features)} rows for {len(expected_grid)} expected patches")
    for fv, patch in zip(features, expected_grid):
        if fv.clip_id != patch.clip_id or fv.patch_index != patch.patch_index:
            raise GridMismatch(
                f"{path}: row ({fv.clip_id}, {fv.patch_index}) does not match "
                f"expected patch ({patch.clip_id}, {patch.patch_index})"
            )
        if abs(fv.start_s - patch.start_s) > _TIMING_TOL_S or abs(fv.end_s - patch.end_s) > _TIMING_TOL_S:
            raise GridMismatch(f"{path}: timing mismatch on ({fv.clip_id}, {fv.patch_index})")
    return features
