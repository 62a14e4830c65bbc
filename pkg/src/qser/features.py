"""Waveform -> mel-spectrogram -> RGB image -> pure-quaternion image.

Frequency warping uses ``mel = 2595 log10(1 + f / 700)``. Power is converted
to decibels against a reference power (the corpus maximum during
preprocessing) and floored at ``floor_db``. The dB grid is normalised with the
corpus extremes, coloured through a fixed lookup table and resized to the
network input size.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .audio import Waveform
from .colormap import Colormap, get_colormap
from .errors import ConfigError, DomainError, InputError

QIMG_MAGIC = b"QIMG"
QIMG_VERSION = 1

_AMIN = 1e-30


@dataclass(frozen=True)
class FeatureConfig:
    fft_size: int = 1024
    hop: int = 512
    n_mels: int = 128
    floor_db: float = -80.0
    height: int = 50
    width: int = 75
    colormap: str = "viridis"

    def __post_init__(self):
        if self.fft_size < 2 or self.hop < 1 or self.n_mels < 1:
            raise ConfigError("fft_size >= 2, hop >= 1 and n_mels >= 1 are required")
        if self.height < 1 or self.width < 1:
            raise ConfigError("image size must be positive")
        if not self.floor_db < 0.0:
            raise ConfigError("floor_db must be negative")

    def canonical(self) -> str:
        return ";".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class NormStats:
    """Corpus-level reference power and dB extremes."""

    ref_power: float
    db_min: float
    db_max: float


def feature_hash(cfg: FeatureConfig, stats: NormStats) -> str:
    text = f"{cfg.canonical()};ref_power={stats.ref_power!r};db_min={stats.db_min!r};db_max={stats.db_max!r}"
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class MelSpectrogram:
    values: np.ndarray  # (n_mels, n_frames), dB, row 0 = lowest band

    @property
    def mel_bins(self) -> int:
        return self.values.shape[0]

    @property
    def frame_count(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class RgbImage:
    pixels: np.ndarray  # (height, width, 3), channels in [0, 1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class QuaternionImage:
    """Grid of quaternions stored as ``(height, width, channels, 4)``."""

    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 4 or d.shape[-1] != 4 or d.shape[2] < 1:
            raise ValueError(f"expected (H, W, C, 4) quaternion grid, got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def imag(self) -> np.ndarray:
        return self.data[..., 1:]

    def is_pure(self) -> bool:
        return bool(np.all(self.data[..., 0] == 0.0))


def mel_scale(f):
    """Hz -> mel. Accepts scalars or arrays; negative input is rejected."""
    f_arr = np.asarray(f, dtype=np.float64)
    if np.any(f_arr < 0):
        raise DomainError("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f_arr / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    out = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


def mel_band_centers(n_mels: int, sample_rate: int) -> np.ndarray:
    """Center frequency (Hz) of each triangular band."""
    mels = np.linspace(0.0, mel_scale(sample_rate / 2.0), n_mels + 2)
    return mel_to_hz(mels)[1:-1]


def mel_filterbank(n_mels: int, fft_size: int, sample_rate: int) -> np.ndarray:
    """Triangular filters, shape ``(n_mels, fft_size // 2 + 1)``, unit peak."""
    edges = mel_to_hz(np.linspace(0.0, mel_scale(sample_rate / 2.0), n_mels + 2))
    freqs = np.arange(fft_size // 2 + 1) * sample_rate / fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def frame_count(n_samples: int, fft_size: int, hop: int) -> int:
    return 1 + (n_samples - fft_size) // hop


def power_spectrogram(samples: np.ndarray, fft_size: int, hop: int) -> np.ndarray:
    """Hann-windowed |STFT|^2, shape ``(fft_size // 2 + 1, n_frames)``; no padding."""
    if samples.size < fft_size:
        raise InputError(
            f"waveform has {samples.size} samples; at least fft_size={fft_size} required"
        )
    n = frame_count(samples.size, fft_size, hop)
    frames = np.lib.stride_tricks.sliding_window_view(samples, fft_size)[::hop][:n]
    window = np.hanning(fft_size + 1)[:-1]
    spec = np.fft.rfft(frames * window, axis=1)
    return (spec.real**2 + spec.imag**2).T


def mel_power(w: Waveform, cfg: FeatureConfig) -> np.ndarray:
    fb = mel_filterbank(cfg.n_mels, cfg.fft_size, w.sample_rate)
    return fb @ power_spectrogram(w.samples, cfg.fft_size, cfg.hop)


def power_to_db(power: np.ndarray, ref_power: float, floor_db: float) -> np.ndarray:
    if ref_power <= _AMIN:
        return np.full(power.shape, float(floor_db))
    db = 10.0 * np.log10(np.maximum(power, _AMIN) / ref_power)
    return np.clip(db, floor_db, 0.0)


def compute_mel_spectrogram(
    w: Waveform, cfg: FeatureConfig = FeatureConfig(), ref_power: float | None = None
) -> MelSpectrogram:
    """Mel spectrogram in dB.

    ``ref_power`` defaults to the maximum mel power of this waveform; the
    dataset module passes the corpus maximum instead.
    """
    p = mel_power(w, cfg)
    ref = float(p.max()) if ref_power is None else float(ref_power)
    return MelSpectrogram(power_to_db(p, ref, cfg.floor_db))


def normalize_db(s: MelSpectrogram, db_min: float, db_max: float) -> np.ndarray:
    if not (np.isfinite(db_min) and np.isfinite(db_max)) or db_max <= db_min:
        raise ConfigError(f"need finite db_max > db_min, got [{db_min}, {db_max}]")
    return np.clip((s.values - db_min) / (db_max - db_min), 0.0, 1.0)


def _resize_axis(a: np.ndarray, n_out: int, axis: int) -> np.ndarray:
    n_in = a.shape[axis]
    if n_in == n_out:
        return a
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n_in - 1)
    t = pos - lo
    shape = [1] * a.ndim
    shape[axis] = n_out
    t = t.reshape(shape)
    a_lo = np.take(a, lo, axis=axis)
    # a + t (b - a) keeps constant regions bit-exact
    return a_lo + t * (np.take(a, hi, axis=axis) - a_lo)


def resize_bilinear(img: np.ndarray, height: int, width: int) -> np.ndarray:
    """Half-pixel-centred bilinear resize of an ``(H, W, ...)`` array."""
    return _resize_axis(_resize_axis(img, height, 0), width, 1)


def render_rgb(
    norm: np.ndarray, cmap: Colormap | None = None, height: int = 50, width: int = 75
) -> RgbImage:
    """Colour a normalised ``(n_mels, n_frames)`` grid and resize it.

    The output has the highest band in row 0, so frequency ascends bottom to top.
    """
    cmap = cmap or get_colormap()
    idx = np.floor(np.asarray(norm, dtype=np.float64) * 255.0 + 0.5).astype(int)
    idx = np.clip(idx, 0, 255)
    rgb = cmap.table[idx[::-1]]
    return RgbImage(np.clip(resize_bilinear(rgb, height, width), 0.0, 1.0))


def encode_quaternion(img: RgbImage) -> QuaternionImage:
    h, w, _ = img.pixels.shape
    data = np.zeros((h, w, 1, 4))
    data[:, :, 0, 1:] = img.pixels
    return QuaternionImage(data)


def decode_quaternion(q: QuaternionImage) -> RgbImage:
    if q.channels != 1:
        raise ValueError("only single-channel quaternion images decode to RGB")
    return RgbImage(q.data[:, :, 0, 1:].copy())


def waveform_to_rgb(w: Waveform, cfg: FeatureConfig, stats: NormStats) -> RgbImage:
    mel = compute_mel_spectrogram(w, cfg, stats.ref_power)
    norm = normalize_db(mel, stats.db_min, stats.db_max)
    return render_rgb(norm, get_colormap(cfg.colormap), cfg.height, cfg.width)


def waveform_to_qimage(w: Waveform, cfg: FeatureConfig, stats: NormStats) -> QuaternionImage:
    return encode_quaternion(waveform_to_rgb(w, cfg, stats))


def qimage_to_bytes(q: QuaternionImage) -> bytes:
    header = QIMG_MAGIC + struct.pack("<4I", QIMG_VERSION, q.height, q.width, q.channels)
    return header + np.ascontiguousarray(q.imag, dtype="<f8").tobytes()


def qimage_from_bytes(buf: bytes) -> QuaternionImage:
    if len(buf) < 20 or buf[:4] != QIMG_MAGIC:
        raise InputError("not a QIMG record")
    version, h, w, c = struct.unpack("<4I", buf[4:20])
    if version != QIMG_VERSION:
        raise InputError(f"unsupported QIMG version {version}")
    expected = 20 + h * w * c * 3 * 8
    if len(buf) != expected:
        raise InputError(f"QIMG record has {len(buf)} bytes, expected {expected}")
    imag = np.frombuffer(buf, dtype="<f8", offset=20).reshape(h, w, c, 3)
    data = np.zeros((h, w, c, 4))
    data[..., 1:] = imag
    return QuaternionImage(data)


def write_qimage(path, q: QuaternionImage) -> None:
    Path(path).write_bytes(qimage_to_bytes(q))


def read_qimage(path) -> QuaternionImage:
    return qimage_from_bytes(Path(path).read_bytes())


def write_png(path, img: RgbImage) -> None:
    from PIL import Image

    px = np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(px, mode="RGB").save(path)
