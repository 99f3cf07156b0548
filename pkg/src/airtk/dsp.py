"""Log-melspectrogram frontend and fixed-size patch cutting.

The 10 ms hop is load-bearing: one spectrogram frame corresponds to one
cell of the 0.01 s retrieval grid, so classifier outputs map onto
timelines without any resampling.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from .audio_io import AudioClip
from .errors import ClipTooShort, IoError

GRID_CELL_S = 0.01


@dataclass(frozen=True)
class FrontendConfig:
    window_length_s: float = 0.025
    hop_length_s: float = 0.010
    fft_size: int = 512
    n_mels: int = 64
    fmin_hz: float = 125.0
    fmax_hz: float = 7500.0
    log_offset: float = 1e-6
    patch_frames: int = 96  # 0.96 s at the 10 ms hop

    def validate(self, sample_rate_hz: int) -> None:
        if not (0 < self.hop_length_s <= self.window_length_s):
            raise ValueError("hop must be positive and no longer than the window")
        if not (0 <= self.fmin_hz < self.fmax_hz <= sample_rate_hz / 2):
            raise ValueError("need 0 <= fmin < fmax <= Nyquist")
        if self.fft_size & (self.fft_size - 1) or self.fft_size <= 0:
            raise ValueError("fft_size must be a power of two")
        if self.fft_size < self.window_samples(sample_rate_hz):
            raise ValueError("fft_size smaller than the analysis window")
        if self.n_mels <= 0 or self.patch_frames <= 0:
            raise ValueError("n_mels and patch_frames must be positive")
        if self.log_offset <= 0:
            raise ValueError("log_offset must be positive")

    def window_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.window_length_s * sample_rate_hz))

    def hop_samples(self, sample_rate_hz: int) -> int:
        return int(round(self.hop_length_s * sample_rate_hz))

    def config_hash(self, sample_rate_hz: int) -> str:
        payload = asdict(self)
        payload["sample_rate_hz"] = sample_rate_hz
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # (n_frames, n_mels), log-mel energies
    frame_hop_s: float
    clip_id: str

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class Patch:
    values: np.ndarray  # (patch_frames, n_mels)
    start_s: float
    end_s: float
    clip_id: str
    patch_index: int = 0
    n_valid_frames: int = field(default=-1)  # frames before zero padding

    @property
    def padded(self) -> bool:
        return self.n_valid_frames != self.values.shape[0]


def hz_to_mel(f):
    """HTK mel scale: 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: FrontendConfig, sample_rate_hz: int) -> np.ndarray:
    """Triangular filters on the HTK mel scale, shape (n_mels, fft_size//2 + 1)."""
    n_bins = cfg.fft_size // 2 + 1
    bin_hz = np.linspace(0.0, sample_rate_hz / 2.0, n_bins)
    mel_edges = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    hz_edges = mel_to_hz(mel_edges)

    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, center, hi = hz_edges[m], hz_edges[m + 1], hz_edges[m + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def band_center_frequencies(cfg: FrontendConfig) -> np.ndarray:
    mel_edges = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(cfg.fmax_hz), cfg.n_mels + 2)
    return mel_to_hz(mel_edges[1:-1])


def frame_count(n_samples: int, window: int, hop: int) -> int:
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def melspectrogram(clip: AudioClip, cfg: FrontendConfig = FrontendConfig()) -> MelSpectrogram:
    """Hann-windowed power STFT projected through the mel filterbank, log-compressed."""
    cfg.validate(clip.sample_rate_hz)
    win = cfg.window_samples(clip.sample_rate_hz)
    hop = cfg.hop_samples(clip.sample_rate_hz)
    n = len(clip.samples)
    if n < win:
        raise ClipTooShort(f"{clip.clip_id}: {n} samples < window of {win}")

    n_frames = frame_count(n, win, hop)
    frames = np.lib.stride_tricks.sliding_window_view(clip.samples, win)[::hop][:n_frames]
    window = get_window("hann", win, fftbins=True)
    spectra = np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)
    power = np.abs(spectra) ** 2
    mel_energies = power @ mel_filterbank(cfg, clip.sample_rate_hz).T
    return MelSpectrogram(
        values=np.log(mel_energies + cfg.log_offset),
        frame_hop_s=cfg.hop_length_s,
        clip_id=clip.clip_id,
    )


def cut_patches(spec: MelSpectrogram, cfg: FrontendConfig = FrontendConfig()) -> list[Patch]:
    """Non-overlapping windows of patch_frames frames; the last one is zero-padded."""
    pf = cfg.patch_frames
    n_frames, n_mels = spec.values.shape
    patches = []
    for k in range(0, -(-n_frames // pf)):
        chunk = spec.values[k * pf : (k + 1) * pf]
        n_valid = chunk.shape[0]
        if n_valid < pf:
            chunk = np.vstack([chunk, np.zeros((pf - n_valid, n_mels))])
        patches.append(
            Patch(
                values=chunk,
                start_s=k * pf * spec.frame_hop_s,
                end_s=(k + 1) * pf * spec.frame_hop_s,
                clip_id=spec.clip_id,
                patch_index=k,
                n_valid_frames=n_valid,
            )
        )
    return patches


def concat_patches(patches: list[Patch]) -> np.ndarray:
    """Inverse of cut_patches (padding stripped)."""
    return np.vstack([p.values[: p.n_valid_frames] for p in patches])


def export_spectrogram(spec: MelSpectrogram, path) -> None:
    """Write <path>.csv (one row per frame) and <path>.pgm (min-max normalized, time on x)."""
    base = Path(path)
    try:
        with open(f"{base}.csv", "w") as f:
            for row in spec.values:
                f.write(",".join(f"{v:.6g}" for v in row) + "\n")

        v = spec.values
        lo, hi = float(v.min()), float(v.max())
        if hi > lo:
            pixels = np.round((v - lo) / (hi - lo) * 255.0).astype(np.uint8)
        else:
            pixels = np.zeros(v.shape, dtype=np.uint8)
        # image rows top-down = high band to low band, columns = frames
        img = pixels.T[::-1]
        header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode()
        Path(f"{base}.pgm").write_bytes(header + img.tobytes())
    except OSError as e:
        raise IoError(f"cannot export spectrogram to {base}: {e}") from e
