import numpy as np
import pytest

from qser import checkpoint as ck
from qser.errors import CompatibilityError
from qser.features import FeatureConfig, NormStats
from qser.training import QCNN, ModelSpec, count_parameters

SPEC = ModelSpec(n_classes=3, height=10, width=12, conv_channels=(2, 3))


@pytest.fixture
def checkpoint():
    model = QCNN.initialise(SPEC, 1)
    return ck.ModelCheckpoint(model, ["a", "b", "c"], FeatureConfig(height=10, width=12), NormStats(0.25, -80.0, 0.0))


def test_round_trip_is_bit_exact(tmp_path, checkpoint):
    path = tmp_path / "m.qser"
    size = ck.save(path, checkpoint)
    assert size == path.stat().st_size
    back = ck.load(path)
    assert back.spec == SPEC and back.labels == ["a", "b", "c"]
    assert back.feature_config == checkpoint.feature_config and back.stats == checkpoint.stats
    for name, arr in checkpoint.model.params.items():
        assert back.model.params[name].tobytes() == arr.tobytes()
    assert ck.to_bytes(back) == path.read_bytes()

    x = np.zeros((4, 10, 12, 1, 4))
    x[..., 1:] = np.random.default_rng(0).random((4, 10, 12, 1, 3))
    assert np.array_equal(back.model.predict_proba(x), checkpoint.model.predict_proba(x))


def test_layout(checkpoint):
    data = ck.to_bytes(checkpoint)
    assert data[:4] == b"QSER"
    assert int.from_bytes(data[4:8], "little") == 1
    meta_len = int.from_bytes(data[8:12], "little")
    rep = count_parameters(SPEC)
    assert len(data) == rep.serialized_bytes + meta_len


@pytest.mark.parametrize("damage", ["truncate", "flip", "magic", "empty", "version"])
def test_corruption_rejected(checkpoint, damage):
    data = bytearray(ck.to_bytes(checkpoint))
    if damage == "truncate":
        data = data[: len(data) // 2]
    elif damage == "flip":
        data[len(data) // 2] ^= 0x10
    elif damage == "magic":
        data[:4] = b"QSEX"
    elif damage == "empty":
        data = bytearray()
    else:
        data[4] = 9
    with pytest.raises(CompatibilityError):
        ck.from_bytes(bytes(data))


def test_missing_file(tmp_path):
    with pytest.raises(CompatibilityError):
        ck.load(tmp_path / "nope.qser")
