import sys
import time
from dataclasses import dataclass
from pathlib import Path

import hypothesis
import numpy as np
import pytest

hypothesis.settings.register_profile("default", deadline=None, max_examples=100)
hypothesis.settings.register_profile("fast", deadline=None, max_examples=10)
hypothesis.settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"

# scripts/make_fixtures.py provides the golden-preprocess helper
sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "scripts"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@dataclass
class TrainingRun:
    """One default-config CLI training run on the synth4 fixture."""

    workdir: Path
    manifest: Path
    checkpoint: Path
    metrics: list
    seconds: float
    seed: int


@pytest.fixture(scope="session")
def synth4_run(tmp_path_factory):
    from qser.cli import main

    work = tmp_path_factory.mktemp("synth4")
    seed = 7
    start = time.perf_counter()
    assert main(["preprocess", "--corpus", str(FIXTURES / "synth4"), "--out", str(work / "feat"), "--seed", str(seed)]) == 0
    ckpt = work / "model.qser"
    assert main(["train", "--manifest", str(work / "feat" / "manifest.txt"), "--out", str(ckpt), "--seed", str(seed)]) == 0
    elapsed = time.perf_counter() - start
    lines = (work / "model.metrics.csv").read_text().splitlines()
    return TrainingRun(work, work / "feat" / "manifest.txt", ckpt, lines, elapsed, seed)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
