import numpy as np
import pytest

from hapcap.errors import InvalidInputError
from hapcap.signal_io import (
    load_signal_dir,
    read_csv,
    read_signal,
    read_wav,
    write_csv,
    write_wav,
)

from conftest import random_signal


def test_wav_float32_round_trip(tmp_path, rng):
    s = random_signal(rng, seconds=2.0, rate=400, sid="orig")
    path = tmp_path / "orig.wav"
    write_wav(path, s)
    back = read_wav(path)
    assert back.id == "orig"
    assert back.sample_rate == 400
    assert np.allclose(back.samples, s.samples, atol=1e-7)


def test_wav_pcm16_round_trip(tmp_path, rng):
    s = random_signal(rng, seconds=1.0, rate=200)
    path = tmp_path / "sig.wav"
    write_wav(path, s, float32=False)
    back = read_wav(path)
    assert np.allclose(back.samples, s.samples, atol=1e-4)


def test_csv_round_trip_is_exact(tmp_path, rng):
    s = random_signal(rng, seconds=1.5, rate=64, sid="c")
    path = tmp_path / "c.csv"
    write_csv(path, s)
    back = read_csv(path)
    assert back.sample_rate == 64
    assert np.array_equal(back.samples, s.samples)


def test_csv_missing_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.5\n0.25\n")
    with pytest.raises(InvalidInputError):
        read_csv(path)


def test_csv_bad_amplitude(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("sample_rate=10\n0.5\nnope\n")
    with pytest.raises(InvalidInputError):
        read_csv(path)


def test_id_override(tmp_path, rng):
    s = random_signal(rng, seconds=1.0, rate=50)
    path = tmp_path / "file.wav"
    write_wav(path, s)
    assert read_signal(path, signal_id="custom").id == "custom"


def test_unsupported_extension(tmp_path):
    path = tmp_path / "sig.txt"
    path.write_text("whatever")
    with pytest.raises(InvalidInputError):
        read_signal(path)


def test_load_signal_dir_sorted(tmp_path, rng):
    for name in ("b", "a", "c"):
        write_wav(tmp_path / f"{name}.wav", random_signal(rng, seconds=0.5, rate=50))
    (tmp_path / "notes.txt").write_text("ignored")
    loaded = load_signal_dir(tmp_path)
    assert [s.id for s in loaded] == ["a", "b", "c"]


def test_load_signal_dir_rejects_missing(tmp_path):
    with pytest.raises(InvalidInputError):
        load_signal_dir(tmp_path / "nope")
