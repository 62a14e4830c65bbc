import wave

import numpy as np
import pytest
from scipy.io import wavfile

from qser.audio import Waveform, read_wav, write_wav
from qser.errors import InputError


def test_reads_16bit(tmp_path):
    data = np.array([0, 16384, -32768, 32767], dtype=np.int16)
    wavfile.write(tmp_path / "a.wav", 8000, data)
    w = read_wav(tmp_path / "a.wav")
    assert w.sample_rate == 8000
    assert w.samples.tolist() == [0.0, 0.5, -1.0, 32767 / 32768]


def test_reads_8bit_unsigned(tmp_path):
    wavfile.write(tmp_path / "a.wav", 8000, np.array([128, 192, 0], dtype=np.uint8))
    assert read_wav(tmp_path / "a.wav").samples.tolist() == [0.0, 0.5, -1.0]


def test_reads_24bit(tmp_path):
    values = [0, 4194304, -8388608]  # 0, 0.5, -1.0 at 24 bits
    frames = b"".join(v.to_bytes(3, "little", signed=True) for v in values)
    with wave.open(str(tmp_path / "a.wav"), "wb") as f:
        f.setnchannels(1)
        f.setsampwidth(3)
        f.setframerate(16000)
        f.writeframes(frames)
    assert read_wav(tmp_path / "a.wav").samples.tolist() == [0.0, 0.5, -1.0]


def test_reads_float32_and_mixes_down(tmp_path):
    data = np.array([[0.5, -0.5], [1.0, 0.0]], dtype=np.float32)
    wavfile.write(tmp_path / "a.wav", 22050, data)
    w = read_wav(tmp_path / "a.wav")
    assert w.samples.tolist() == [0.0, 0.5]


def test_roundtrip_16bit(tmp_path):
    x = np.linspace(-0.9, 0.9, 101)
    write_wav(tmp_path / "a.wav", Waveform(x, 16000))
    assert np.allclose(read_wav(tmp_path / "a.wav").samples, x, atol=0.5 / 32768)


def test_garbage_file(tmp_path):
    (tmp_path / "bad.wav").write_bytes(b"not a wave file at all")
    with pytest.raises(InputError):
        read_wav(tmp_path / "bad.wav")


def test_waveform_validation():
    with pytest.raises(InputError):
        Waveform(np.array([]), 16000)
    with pytest.raises(InputError):
        Waveform(np.array([np.nan]), 16000)
    with pytest.raises(InputError):
        Waveform(np.zeros(4), 0)
