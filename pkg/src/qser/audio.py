"""PCM WAV decoding into mono float waveforms."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import InputError


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size == 0:
            raise InputError("waveform must be a non-empty 1-D array")
        if not np.all(np.isfinite(s)):
            raise InputError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise InputError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def to_float(data: np.ndarray) -> np.ndarray:
    """Map integer PCM to [-1, 1); float data passes through."""
    if data.dtype == np.uint8:
        return (data.astype(np.float64) - 128.0) / 128.0
    if data.dtype == np.int16:
        return data.astype(np.float64) / 32768.0
    if data.dtype == np.int32:
        # scipy returns 24-bit PCM left-justified in int32
        return data.astype(np.float64) / 2147483648.0
    if data.dtype.kind == "f":
        return data.astype(np.float64)
    raise InputError(f"unsupported sample type {data.dtype}")


def read_wav(path) -> Waveform:
    """Read a PCM WAV file (8/16/24/32-bit int or 32-bit float) as mono."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (ValueError, OSError, EOFError) as exc:
        raise InputError(f"cannot decode {path}: {exc}") from exc
    x = to_float(np.asarray(data))
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise InputError(f"{path} contains no samples")
    return Waveform(x, rate)


def write_wav(path, wave: Waveform, bits: int = 16) -> None:
    x = np.clip(wave.samples, -1.0, 1.0)
    if bits == 16:
        data = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    elif bits == 32:
        data = x.astype("<f4")
    else:
        raise InputError(f"unsupported output bit depth {bits}")
    wavfile.write(Path(path), wave.sample_rate, data)
