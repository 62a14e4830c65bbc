import logging
import shutil

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qser import dataset as D
from qser.audio import Waveform, write_wav
from qser.errors import DataError, InputError
from qser.features import FeatureConfig, read_qimage

RATE = 8000


def tone(freq, seconds=0.25, amp=0.5):
    t = np.arange(int(seconds * RATE)) / RATE
    return Waveform(amp * np.sin(2 * np.pi * freq * t), RATE)


def make_corpus(root, files):
    for rel, wave in files.items():
        (root / rel).parent.mkdir(parents=True, exist_ok=True)
        write_wav(root / rel, wave)
    return root


def test_ravdess_labels():
    assert D.ravdess_label("03-01-05-01-01-01-02.wav") == "angry"
    assert D.ravdess_label("03-01-01-01-01-01-02.wav") == "neutral"
    assert D.ravdess_label("03-01-08-02-02-02-24.wav") == "surprised"
    with pytest.raises(InputError):
        D.ravdess_label("03-01-09-01-01-01-02.wav")
    with pytest.raises(InputError):
        D.ravdess_label("hello.wav")


def test_scan_folder_and_skips(tmp_path):
    make_corpus(tmp_path, {"b/x.wav": tone(300), "a/y.wav": tone(500), "a/z.wav": tone(700)})
    (tmp_path / "a" / "bad.wav").write_bytes(b"not audio")
    (tmp_path / "loose.wav").write_bytes((tmp_path / "a" / "y.wav").read_bytes())
    m = D.scan_corpus(tmp_path)
    assert m.labels == ["a", "b"]
    assert [(r.path, r.label) for r in m.records] == [("a/y.wav", 0), ("a/z.wav", 0), ("b/x.wav", 1)]
    assert sorted(p for p, _ in m.skipped) == ["a/bad.wav", "loose.wav"]
    assert m.records[0].duration == pytest.approx(0.25)


def test_scan_ravdess(tmp_path):
    make_corpus(tmp_path, {"Actor_01/03-01-05-01-01-01-01.wav": tone(300), "Actor_02/03-01-02-01-01-01-02.wav": tone(400)})
    m = D.scan_corpus(tmp_path, "ravdess")
    assert m.labels == ["angry", "calm"]


def test_scan_errors(tmp_path):
    with pytest.raises(DataError):
        D.scan_corpus(tmp_path / "missing")
    with pytest.raises(DataError):
        D.scan_corpus(tmp_path)
    with pytest.raises(InputError):
        D.scan_corpus(tmp_path, "by-vibes")


def test_db_stats(tmp_path):
    from qser.features import compute_mel_spectrogram

    same = make_corpus(tmp_path / "same", {"a/1.wav": tone(440), "a/2.wav": tone(440)})
    m = D.compute_db_stats(D.scan_corpus(same))
    single = compute_mel_spectrogram(tone(440)).values
    assert (m.stats.db_min, m.stats.db_max) == (float(single.min()), float(single.max()))

    make_corpus(same, {"b/3.wav": Waveform(np.zeros(2000), RATE)})
    m = D.compute_db_stats(D.scan_corpus(same))
    assert m.stats.db_max == 0.0
    assert m.stats.db_min == -80.0

    silent = make_corpus(tmp_path / "silent", {"a/1.wav": Waveform(np.zeros(2000), RATE)})
    with pytest.raises(DataError):
        D.compute_db_stats(D.scan_corpus(silent))


def test_db_stats_permutation_and_extension(tmp_path):
    waves = [tone(f, amp=a) for f, a in [(300, 0.5), (900, 0.1), (2000, 0.02)]]
    fwd = make_corpus(tmp_path / "fwd", {f"c/{i}.wav": w for i, w in enumerate(waves)})
    rev = make_corpus(tmp_path / "rev", {f"c/{2 - i}.wav": w for i, w in enumerate(waves)})
    s1 = D.compute_db_stats(D.scan_corpus(fwd)).stats
    s2 = D.compute_db_stats(D.scan_corpus(rev)).stats
    assert s1 == s2
    make_corpus(fwd, {"c/9.wav": tone(1200, amp=0.9)})
    s3 = D.compute_db_stats(D.scan_corpus(fwd)).stats
    assert s3.ref_power >= s1.ref_power and s3.db_min <= s1.db_min


def synthetic_manifest(counts):
    records = [D.Record(f"{c}/{k}.wav", c) for c, n in enumerate(counts) for k in range(n)]
    return D.DatasetManifest(root=".", labeler="folder", labels=[str(c) for c in range(len(counts))], records=records)


def test_split_sizes_and_seed():
    m = D.split(synthetic_manifest([10, 10, 10]), 0)
    for c in range(3):
        tags = [r.split for r in m.records if r.label == c]
        assert tags.count("train") == 8 and tags.count("test") == 2
    assert D.split(synthetic_manifest([10, 10, 10]), 0).records == m.records
    assert D.split(synthetic_manifest([10, 10, 10]), 1).records != m.records


def test_split_small_classes(caplog):
    with caplog.at_level(logging.WARNING):
        m = D.split(synthetic_manifest([1, 2, 3]), 0)
    tags = {c: [r.split for r in m.records if r.label == c] for c in range(3)}
    assert tags[0] == ["train"]
    assert tags[1].count("test") == 1 and tags[2].count("test") == 1
    assert "single sample" in caplog.text


@given(st.lists(st.integers(1, 30), min_size=1, max_size=6), st.integers(0, 2**32 - 1))
def test_split_is_stratified_partition(counts, seed):
    m = D.split(synthetic_manifest(counts), seed)
    assert all(r.split in ("train", "test") for r in m.records)
    for c, n in enumerate(counts):
        n_test = sum(r.split == "test" for r in m.records if r.label == c)
        expected = int(np.floor(0.2 * n + 0.5))
        assert n_test == (max(1, expected) if n >= 2 else 0)


def test_preprocess_and_manifest_round_trip(tmp_path, fixtures_dir):
    corpus = tmp_path / "corpus"
    shutil.copytree(fixtures_dir / "tiny", corpus)
    m = D.preprocess(corpus, "folder", tmp_path / "out", seed=3)
    text = (tmp_path / "out" / "manifest.txt").read_text()
    assert "root = ../corpus" in text
    back = D.load_manifest(tmp_path / "out" / "manifest.txt")
    assert back.records == m.records and back.labels == m.labels
    assert back.stats == m.stats and back.feature_hash == m.feature_hash
    assert back.feature_config == FeatureConfig()
    assert D.manifest_to_text(back, tmp_path / "out") == text
    x, y = D.load_split(back, "train")
    assert x.shape == (6, 50, 75, 1, 4) and sorted(y.tolist()) == [0, 0, 0, 1, 1, 1]
    q = read_qimage(back.feature_path(back.records[0]))
    assert q.is_pure() and 0.0 <= q.imag.min() and q.imag.max() <= 1.0


def test_manifest_rejects_tampering(tmp_path, fixtures_dir):
    D.preprocess(fixtures_dir / "tiny", "folder", tmp_path, seed=0)
    path = tmp_path / "manifest.txt"
    text = path.read_text()
    path.write_text(text.replace("feature.n_mels = 128", "feature.n_mels = 64"))
    with pytest.raises(DataError, match="hash"):
        D.load_manifest(path)
    path.write_text(text.replace("format = 1", "format = 7"))
    with pytest.raises(DataError):
        D.load_manifest(path)
    with pytest.raises(DataError):
        D.load_manifest(tmp_path / "missing.txt")
