"""Corpus scanning, corpus dB statistics, stratified splitting and manifests.

Manifest files are plain text. ``key = value`` lines hold settings;
tab-separated ``label``, ``record`` and ``skip`` lines hold the tables::

    # qser dataset manifest
    format = 1
    root = ../corpus
    labeler = folder
    features = features
    split_seed = 0
    feature.fft_size = 1024
    ...
    stats.ref_power = 12.5
    stats.db_min = -80.0
    stats.db_max = 0.0
    feature_hash = 0123abcd...
    label<TAB>0<TAB>angry
    record<TAB>train<TAB>0<TAB>2.5<TAB>angry/a.wav
    skip<TAB>broken.wav<TAB>reason

Floats are written with ``repr`` so manifests round-trip exactly. ``root``
and ``features`` are relative to the manifest's directory.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .audio import read_wav
from .errors import DataError, InputError
from .features import (
    FeatureConfig,
    NormStats,
    encode_quaternion,
    feature_hash,
    mel_power,
    power_to_db,
    read_qimage,
    waveform_to_rgb,
    write_png,
    write_qimage,
)

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
TEST_FRACTION = 0.2

RAVDESS_EMOTIONS = {
    "01": "neutral",
    "02": "calm",
    "03": "happy",
    "04": "sad",
    "05": "angry",
    "06": "fearful",
    "07": "disgust",
    "08": "surprised",
}


@dataclass(frozen=True)
class Record:
    path: str  # relative to the corpus root, POSIX separators
    label: int
    split: str = ""  # "train", "test" or "" before splitting
    duration: float = 0.0


@dataclass
class DatasetManifest:
    root: Path
    labeler: str
    labels: list
    records: list
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)
    stats: NormStats | None = None
    split_seed: int | None = None
    skipped: list = field(default_factory=list)  # (path, reason)
    base_dir: Path | None = None  # directory holding the manifest file
    features: str = "features"

    @property
    def feature_hash(self) -> str | None:
        return None if self.stats is None else feature_hash(self.feature_config, self.stats)

    def split_records(self, split: str) -> list:
        return [r for r in self.records if r.split == split]

    def feature_path(self, rec: Record) -> Path:
        if self.base_dir is None:
            raise DataError("manifest has no location; features cannot be resolved")
        return self.base_dir / self.features / (rec.path + ".qimg")


def ravdess_label(filename: str) -> str:
    """Emotion name from a RAVDESS file name such as ``03-01-05-01-01-01-02.wav``."""
    parts = Path(filename).stem.split("-")
    if len(parts) != 7:
        raise InputError(f"{filename!r} is not a RAVDESS file name")
    try:
        return RAVDESS_EMOTIONS[parts[2]]
    except KeyError:
        raise InputError(f"unknown RAVDESS emotion code {parts[2]!r} in {filename!r}") from None


def _label_for(rel: Path, labeler: str) -> str:
    if labeler == "folder":
        if len(rel.parts) < 2:
            raise InputError("file is not inside a label folder")
        return rel.parts[-2]
    if labeler in ("ravdess", "ravdess-filename"):
        return ravdess_label(rel.name)
    raise InputError(f"unknown labeler {labeler!r}")


def scan_corpus(root, labeler: str = "folder") -> DatasetManifest:
    """Index every ``.wav`` under ``root`` in lexicographic path order."""
    root = Path(root)
    if labeler not in ("folder", "ravdess", "ravdess-filename"):
        raise InputError(f"unknown labeler {labeler!r}")
    if not root.is_dir():
        raise DataError(f"corpus root {root} does not exist")
    rels = sorted(
        (p.relative_to(root) for p in root.rglob("*") if p.is_file() and p.suffix.lower() == ".wav"),
        key=lambda p: p.as_posix(),
    )
    found, skipped = [], []
    for rel in rels:
        try:
            name = _label_for(rel, labeler)
            wave = read_wav(root / rel)
        except InputError as exc:
            skipped.append((rel.as_posix(), str(exc)))
            continue
        found.append((rel.as_posix(), name, wave.duration))
    if not found:
        raise DataError(f"no usable wav files under {root}")
    labels = sorted({name for _, name, _ in found})
    index = {name: i for i, name in enumerate(labels)}
    records = [Record(path, index[name], "", dur) for path, name, dur in found]
    return DatasetManifest(root, "ravdess" if labeler == "ravdess-filename" else labeler, labels, records, skipped=skipped)


def compute_db_stats(manifest: DatasetManifest, cfg: FeatureConfig | None = None) -> DatasetManifest:
    """Corpus reference power and dB extremes over every mel cell.

    The reference is the largest mel power in the corpus; dB values are
    relative to it and floored at ``cfg.floor_db``. Files that cannot be
    processed are moved to the skip list.
    """
    cfg = cfg or manifest.feature_config
    powers, kept, skipped = [], [], list(manifest.skipped)
    for rec in manifest.records:
        try:
            powers.append(mel_power(read_wav(manifest.root / rec.path), cfg))
        except InputError as exc:
            skipped.append((rec.path, str(exc)))
            continue
        kept.append(rec)
    if not kept:
        raise DataError("no file in the corpus could be processed")
    ref = max(float(p.max()) for p in powers)
    db_min, db_max = math.inf, -math.inf
    for p in powers:
        db = power_to_db(p, ref, cfg.floor_db)
        db_min, db_max = min(db_min, float(db.min())), max(db_max, float(db.max()))
    if not db_max > db_min:
        raise DataError(f"corpus has no dynamic range (all cells at {db_min} dB)")
    return replace(
        manifest,
        records=kept,
        skipped=skipped,
        feature_config=cfg,
        stats=NormStats(ref, db_min, db_max),
    )


def split(manifest: DatasetManifest, seed: int) -> DatasetManifest:
    """Stratified 80/20 split; per class ``round(0.2 n)`` test samples, at least one when n >= 2."""
    rng = np.random.default_rng(seed)
    tags = [""] * len(manifest.records)
    for label, name in enumerate(manifest.labels):
        members = [i for i, r in enumerate(manifest.records) if r.label == label]
        n = len(members)
        if n == 0:
            continue
        if n < 5:
            log.warning("class %r has only %d samples", name, n)
        n_test = int(math.floor(TEST_FRACTION * n + 0.5))
        if n >= 2:
            n_test = max(1, n_test)
        else:
            log.warning("class %r has a single sample; it goes to the training split", name)
        perm = rng.permutation(n)
        test = {members[k] for k in perm[:n_test]}
        for i in members:
            tags[i] = "test" if i in test else "train"
    records = [replace(r, split=t) for r, t in zip(manifest.records, tags)]
    return replace(manifest, records=records, split_seed=seed)


# -- manifest file -----------------------------------------------------------


def _relpath(target: Path, start: Path) -> str:
    return Path(os.path.relpath(Path(target).resolve(), Path(start).resolve())).as_posix()


def manifest_to_text(m: DatasetManifest, base_dir) -> str:
    lines = [
        "# qser dataset manifest",
        f"format = {FORMAT_VERSION}",
        f"root = {_relpath(m.root, base_dir)}",
        f"labeler = {m.labeler}",
        f"features = {m.features}",
        f"split_seed = {'none' if m.split_seed is None else m.split_seed}",
    ]
    for f in fields(FeatureConfig):
        lines.append(f"feature.{f.name} = {getattr(m.feature_config, f.name)!r}")
    if m.stats is not None:
        lines += [
            f"stats.ref_power = {m.stats.ref_power!r}",
            f"stats.db_min = {m.stats.db_min!r}",
            f"stats.db_max = {m.stats.db_max!r}",
            f"feature_hash = {m.feature_hash}",
        ]
    lines += [f"label\t{i}\t{name}" for i, name in enumerate(m.labels)]
    lines += [f"record\t{r.split or '-'}\t{r.label}\t{r.duration!r}\t{r.path}" for r in m.records]
    lines += [f"skip\t{p}\t{' '.join(reason.split())}" for p, reason in m.skipped]
    return "\n".join(lines) + "\n"


def save_manifest(m: DatasetManifest, path) -> None:
    path = Path(path)
    path.write_text(manifest_to_text(m, path.parent), encoding="utf-8")


def _parse_value(text: str, typ):
    if typ is int:
        return int(text)
    if typ is float:
        return float(text)
    return text.strip("'\"")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    kv, labels, records, skipped = {}, {}, [], []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            if line.startswith("label\t"):
                _, idx, name = line.split("\t", 2)
                labels[int(idx)] = name
            elif line.startswith("record\t"):
                _, tag, label, dur, rel = line.split("\t", 4)
                records.append(Record(rel, int(label), "" if tag == "-" else tag, float(dur)))
            elif line.startswith("skip\t"):
                _, rel, reason = line.split("\t", 2)
                skipped.append((rel, reason))
            else:
                key, value = line.split("=", 1)
                kv[key.strip()] = value.strip()
        except ValueError as exc:
            raise DataError(f"{path}:{n}: malformed manifest line") from exc
    if kv.get("format") != str(FORMAT_VERSION):
        raise DataError(f"{path}: unsupported manifest format {kv.get('format')!r}")
    if sorted(labels) != list(range(len(labels))):
        raise DataError(f"{path}: label indices must be dense 0..K-1")
    types = {f.name: type(getattr(FeatureConfig(), f.name)) for f in fields(FeatureConfig)}
    cfg = FeatureConfig(**{k: _parse_value(kv[f"feature.{k}"], t) for k, t in types.items() if f"feature.{k}" in kv})
    stats = None
    if "stats.ref_power" in kv:
        stats = NormStats(float(kv["stats.ref_power"]), float(kv["stats.db_min"]), float(kv["stats.db_max"]))
    seed = kv.get("split_seed", "none")
    m = DatasetManifest(
        root=(path.parent / kv.get("root", ".")),
        labeler=kv.get("labeler", "folder"),
        labels=[labels[i] for i in range(len(labels))],
        records=records,
        feature_config=cfg,
        stats=stats,
        split_seed=None if seed == "none" else int(seed),
        skipped=skipped,
        base_dir=path.parent,
        features=kv.get("features", "features"),
    )
    if "feature_hash" in kv and kv["feature_hash"] != m.feature_hash:
        raise DataError(f"{path}: feature hash does not match the stored settings")
    return m


# -- feature files -----------------------------------------------------------


def preprocess(corpus, labeler: str, out_dir, cfg: FeatureConfig | None = None, seed: int = 0, png: bool = False):
    """Scan, compute stats, split, and write one QIMG record per utterance plus ``manifest.txt``."""
    cfg = cfg or FeatureConfig()
    out_dir = Path(out_dir)
    m = scan_corpus(corpus, labeler)
    m = split(compute_db_stats(m, cfg), seed)
    m.base_dir = out_dir
    for rec in m.records:
        img = waveform_to_rgb(read_wav(m.root / rec.path), cfg, m.stats)
        target = m.feature_path(rec)
        target.parent.mkdir(parents=True, exist_ok=True)
        write_qimage(target, encode_quaternion(img))
        if png:
            write_png(target.with_suffix(".png"), img)
    save_manifest(m, out_dir / "manifest.txt")
    return m


def load_split(m: DatasetManifest, split_name: str):
    """Stack the QIMG records of one split into ``(N, H, W, 1, 4)`` and labels ``(N,)``."""
    recs = m.split_records(split_name)
    if not recs:
        raise DataError(f"split {split_name!r} is empty")
    xs = []
    for rec in recs:
        try:
            xs.append(read_qimage(m.feature_path(rec)).data)
        except (OSError, InputError) as exc:
            raise DataError(f"cannot load features for {rec.path}: {exc}") from exc
    return np.stack(xs), np.array([r.label for r in recs], dtype=np.int64)
