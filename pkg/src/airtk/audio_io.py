"""WAV decoding, canonicalization and resampling.

Everything downstream works on mono float waveforms at a single canonical
rate (16 kHz by default), so this module is the only place that knows about
RIFF chunks, bit depths and channel layouts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import CorruptFile, EmptyAudio, OutOfRange, UnsupportedFormat

CANONICAL_RATE_HZ = 16000

# Kaiser beta for the windowed-sinc anti-aliasing filter.
_KAISER_BETA = 8.6


@dataclass(frozen=True)
class AudioClip:
    """Mono waveform in [-1, 1] at a known sample rate."""

    clip_id: str
    samples: np.ndarray  # float64, 1-D
    sample_rate_hz: int
    source_path: str = ""

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def with_samples(self, samples: np.ndarray) -> "AudioClip":
        return replace(self, samples=samples)


def _decode_pcm(data: bytes, bits: int, audio_format: int) -> np.ndarray:
    if audio_format == 1 and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64)
        return x / 32768.0
    if audio_format == 1 and bits == 24:
        raw = np.frombuffer(data, dtype=np.uint8).reshape(-1, 3)
        x = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        x = np.where(x >= 1 << 23, x - (1 << 24), x).astype(np.float64)
        return x / float(1 << 23)
    if audio_format == 3 and bits == 32:
        return np.frombuffer(data, dtype="<f4").astype(np.float64)
    raise UnsupportedFormat(f"format tag {audio_format} at {bits} bits is not supported")


def _read_riff_chunks(blob: bytes, path: str):
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise CorruptFile(f"{path}: not a RIFF/WAVE file")
    pos = 12
    chunks = {}
    while pos + 8 <= len(blob):
        cid = blob[pos : pos + 4]
        (size,) = struct.unpack_from("<I", blob, pos + 4)
        body = blob[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise CorruptFile(f"{path}: chunk {cid!r} truncated")
        chunks.setdefault(cid, body)
        pos += 8 + size + (size & 1)  # chunks are word-aligned
    return chunks


def load_wav(path, target_rate_hz: int = CANONICAL_RATE_HZ, clip_id: str | None = None) -> AudioClip:
    """Decode a PCM16/PCM24/float32 WAV file into a mono clip at target_rate_hz.

    Stereo input is mixed down by channel averaging; other channel counts are
    rejected. The clip id defaults to the file stem.
    """
    path = Path(path)
    blob = path.read_bytes()
    chunks = _read_riff_chunks(blob, str(path))
    if b"fmt " not in chunks or b"data" not in chunks:
        raise CorruptFile(f"{path}: missing fmt or data chunk")

    fmt = chunks[b"fmt "]
    if len(fmt) < 16:
        raise CorruptFile(f"{path}: fmt chunk too short")
    audio_format, n_channels, rate_hz, _, block_align, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if n_channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: {n_channels} channels (only mono/stereo)")

    data = chunks[b"data"]
    if block_align == 0 or len(data) % block_align != 0:
        raise CorruptFile(f"{path}: data length {len(data)} not a multiple of block align {block_align}")

    x = _decode_pcm(data, bits, audio_format)
    if n_channels == 2:
        x = x.reshape(-1, 2).mean(axis=1)
    if len(x) == 0:
        raise EmptyAudio(f"{path}: zero samples")

    x = resample(x, rate_hz, target_rate_hz)
    np.clip(x, -1.0, 1.0, out=x)
    return AudioClip(
        clip_id=clip_id or path.stem,
        samples=x,
        sample_rate_hz=target_rate_hz,
        source_path=str(path),
    )


def resample(samples: np.ndarray, rate_hz: int, target_rate_hz: int) -> np.ndarray:
    """Windowed-sinc polyphase resampling (Kaiser window, beta 8.6)."""
    samples = np.asarray(samples, dtype=np.float64)
    if rate_hz == target_rate_hz:
        return samples.copy()
    ratio = Fraction(target_rate_hz, rate_hz)
    return resample_poly(samples, ratio.numerator, ratio.denominator, window=("kaiser", _KAISER_BETA))


def trim(clip: AudioClip, start_s: float, end_s: float) -> AudioClip:
    """Return the samples in [start_s, end_s) as a new clip."""
    if not (0.0 <= start_s < end_s <= clip.duration_seconds + 1e-9):
        raise OutOfRange(f"trim [{start_s}, {end_s}) outside clip of {clip.duration_seconds:.3f} s")
    i = int(round(start_s * clip.sample_rate_hz))
    j = int(round(end_s * clip.sample_rate_hz))
    j = min(j, len(clip.samples))
    return replace(clip, samples=clip.samples[i:j].copy())


def save_wav(path, samples: np.ndarray, rate_hz: int) -> None:
    """Write a mono 16-bit PCM WAV file."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(x * 32767.0).astype("<i2").tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, rate_hz, rate_hz * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(pcm))
    Path(path).write_bytes(header + pcm)
