"""Regenerate the synthetic wav corpora under tests/fixtures/.

synth4: 4 classes x 15 utterances (1 s, 8 kHz, 16-bit). Each class is noise
confined to its own quarter of the mel axis, which renders as a bright band
at a class-specific height: a trivially separable set for overfit checks.
tiny:   2 classes x 4 utterances (0.5 s, 8 kHz) for golden-file checks.
tiny_golden.json: sha256 of every file produced by preprocessing tiny with
the default config and split seed 0 (corpus copied next to the output so
the manifest's relative root is always ``../corpus``).

    python scripts/make_fixtures.py
"""

import hashlib
import json
import shutil
import tempfile
from pathlib import Path

import numpy as np

from qser.audio import Waveform, write_wav
from qser.dataset import preprocess

ROOT = Path(__file__).resolve().parents[1] / "tests" / "fixtures"
RATE = 8000


def tone(rng, f0, seconds, partials=3):
    t = np.arange(int(seconds * RATE)) / RATE
    f = f0 * (1.0 + rng.uniform(-0.08, 0.08))
    x = sum(np.sin(2 * np.pi * f * (p + 1) * t + rng.uniform(0, 2 * np.pi)) / (p + 1) for p in range(partials))
    env = np.clip(np.minimum(t, t[-1] - t) * 20.0, 0.0, 1.0)
    return x * env


BANDS = {"band_a": (60.0, 450.0), "band_b": (550.0, 1150.0), "band_c": (1300.0, 2200.0), "band_d": (2400.0, 3900.0)}


def band_noise(rng, lo, hi, seconds):
    n = int(seconds * RATE)
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, 1.0 / RATE)
    spec[(f < lo) | (f > hi)] = 0.0
    return np.fft.irfft(spec, n)


def make_class(rng, name, seconds):
    if name in BANDS:
        lo, hi = BANDS[name]
        x = band_noise(rng, lo * rng.uniform(0.95, 1.05), hi * rng.uniform(0.95, 1.05), seconds)
        return 0.5 * rng.uniform(0.6, 1.0) * x / np.max(np.abs(x))
    n = int(seconds * RATE)
    if name == "low":
        x = tone(rng, 220.0, seconds)
    elif name == "high":
        x = tone(rng, 2600.0, seconds, partials=1)
    else:
        raise ValueError(name)
    x = x + 0.01 * rng.standard_normal(n)
    return 0.5 * rng.uniform(0.6, 1.0) * x / np.max(np.abs(x))


def write_corpus(dirname, classes, per_class, seconds, seed):
    rng = np.random.default_rng(seed)
    for name in classes:
        out = ROOT / dirname / name
        out.mkdir(parents=True, exist_ok=True)
        for k in range(per_class):
            write_wav(out / f"{name}_{k:02d}.wav", Waveform(make_class(rng, name, seconds), RATE))


def tree_hashes(root):
    root = Path(root)
    return {p.relative_to(root).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(root.rglob("*")) if p.is_file()}


def golden_preprocess(corpus):
    """Preprocess ``corpus`` in a scratch dir laid out as ``corpus/`` + ``out/``; return output hashes."""
    with tempfile.TemporaryDirectory() as tmp:
        shutil.copytree(corpus, Path(tmp) / "corpus")
        preprocess(Path(tmp) / "corpus", "folder", Path(tmp) / "out", seed=0)
        return tree_hashes(Path(tmp) / "out")


if __name__ == "__main__":
    write_corpus("synth4", sorted(BANDS), 15, 1.0, seed=2024)
    write_corpus("tiny", ["low", "high"], 4, 0.5, seed=7)
    golden = golden_preprocess(ROOT / "tiny")
    (ROOT / "tiny_golden.json").write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")
    print(f"fixtures written under {ROOT}")
