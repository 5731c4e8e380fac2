import numpy as np
import pytest

from hapcap.errors import InvalidInputError
from hapcap.features import (
    MEL_FLOOR,
    WaveformFeatureExtractor,
    amplitude_stats,
    envelope_frequency,
    export_feature_table,
    extract_features,
    load_spectrogram_csv,
    log_mel_spectrogram,
    pooled_spectrogram_stats,
    save_spectrogram_csv,
    zero_crossing_rate,
)
from hapcap.signals import amplify

from conftest import make_signal, random_signal


def am_sine(carrier_hz, am_hz, rate=1000, seconds=10.0, depth=1.0, amp=0.9):
    t = np.arange(int(seconds * rate)) / rate
    envelope = 1.0 - depth + depth * 0.5 * (1.0 + np.sin(2 * np.pi * am_hz * t))
    return make_signal(amp * envelope * np.sin(2 * np.pi * carrier_hz * t), rate=rate)


class TestZeroCrossingRate:
    def test_alternating(self):
        assert zero_crossing_rate(make_signal([1, -1, 1, -1])) == 1.0

    def test_constant(self):
        assert zero_crossing_rate(make_signal([0.5, 0.5, 0.5])) == 0.0

    def test_zero_counts_as_positive(self):
        # signs are [+, +, +, -]: one change across three steps
        assert zero_crossing_rate(make_signal([0.0, 0.5, 0.0, -0.5])) == pytest.approx(1 / 3)

    def test_sine_matches_analytic_rate(self):
        rate, f = 1000, 50
        t = np.arange(10 * rate) / rate
        s = make_signal(0.9 * np.sin(2 * np.pi * f * t), rate=rate)
        expected = 2 * f / rate
        assert abs(zero_crossing_rate(s) - expected) / expected < 0.05

    def test_too_short(self):
        with pytest.raises(InvalidInputError):
            zero_crossing_rate(make_signal([0.5]))

    def test_invariant_under_positive_gain(self, rng):
        s = random_signal(rng, seconds=2.0, rate=100, amplitude=0.45)
        assert zero_crossing_rate(s) == zero_crossing_rate(amplify(s, 2.0))


class TestAmplitudeStats:
    def test_all_zero(self):
        assert amplitude_stats(make_signal([0.0, 0.0, 0.0])) == (0, 0, 0, 0)

    def test_small_example(self):
        mx, mn, rms, energy = amplitude_stats(make_signal([0.5, -0.5]))
        assert (mx, mn) == (0.5, -0.5)
        assert rms == pytest.approx(0.5)
        assert energy == pytest.approx(0.5)

    def test_energy_matches_brute_force(self, rng):
        s = random_signal(rng, seconds=3.0, rate=100)
        _, _, rms, energy = amplitude_stats(s)
        brute = sum(float(v) * float(v) for v in s.samples)
        assert abs(energy - brute) < 1e-9
        assert energy == pytest.approx(rms**2 * s.samples.size)

    def test_energy_additive_over_concatenation(self, rng):
        a = random_signal(rng, seconds=1.0, rate=100, sid="a")
        b = random_signal(rng, seconds=2.0, rate=100, sid="b")
        both = make_signal(np.concatenate([a.samples, b.samples]), rate=100)
        assert amplitude_stats(both)[3] == pytest.approx(
            amplitude_stats(a)[3] + amplitude_stats(b)[3]
        )


class TestEnvelopeFrequency:
    def test_constant_carrier_reports_zero(self):
        s = am_sine(150, 0, depth=0.0)
        assert envelope_frequency(s) == 0.0

    def test_am_four_hz(self):
        s = am_sine(150, 4.0)
        assert abs(envelope_frequency(s) - 4.0) <= 0.1 + 1e-9  # one bin at 10 s

    def test_burst_rhythm_two_hz(self):
        rate = 1000
        t = np.arange(10 * rate) / rate
        gate = (np.sin(2 * np.pi * 2.0 * t) > 0).astype(float)
        s = make_signal(0.8 * gate * np.sin(2 * np.pi * 130 * t), rate=rate)
        assert abs(envelope_frequency(s) - 2.0) <= 0.1 + 1e-9

    def test_silence_reports_zero(self):
        assert envelope_frequency(make_signal(np.zeros(1000), rate=100)) == 0.0


class TestLogMelSpectrogram:
    def test_silence_hits_floor(self):
        s = make_signal(np.zeros(8000), rate=8000)
        spec = log_mel_spectrogram(s)
        assert np.allclose(spec.data, np.log(MEL_FLOOR))

    def test_frame_count_formula(self):
        s = make_signal(np.zeros(80_000), rate=8000)
        spec = log_mel_spectrogram(s, window_s=0.025, hop_s=0.010)
        assert spec.data.shape == (998, 128)

    @pytest.mark.parametrize("window_s,hop_s", [(0.02, 0.01), (0.05, 0.025), (0.03, 0.015)])
    def test_frame_count_grid(self, rng, window_s, hop_s):
        rate = 2000
        s = random_signal(rng, seconds=4.0, rate=rate)
        spec = log_mel_spectrogram(s, window_s, hop_s)
        window, hop = round(window_s * rate), round(hop_s * rate)
        assert spec.data.shape[0] == 1 + (s.samples.size - window) // hop

    def test_amplitude_doubling_adds_log4(self):
        rate = 2000
        t = np.arange(4 * rate) / rate
        quiet = make_signal(0.25 * np.sin(2 * np.pi * 220 * t), rate=rate)
        loud = make_signal(0.5 * np.sin(2 * np.pi * 220 * t), rate=rate)
        a = log_mel_spectrogram(quiet).data
        b = log_mel_spectrogram(loud).data
        above = a > np.log(MEL_FLOOR) + 1e-9
        assert above.any()
        assert np.allclose(b[above] - a[above], np.log(4.0), atol=1e-9)

    def test_too_short_signal(self):
        with pytest.raises(InvalidInputError):
            log_mel_spectrogram(make_signal(np.zeros(10), rate=8000))

    def test_pooled_stats_shape(self, rng):
        s = random_signal(rng, seconds=1.0, rate=2000)
        assert pooled_spectrogram_stats(s).shape == (256,)


class TestFeatureTable:
    def test_rows_and_header(self, tmp_path, rng):
        sigs = [random_signal(rng, seconds=1.0, rate=200, sid=f"s{i}") for i in range(3)]
        path = tmp_path / "features.csv"
        rows = export_feature_table(sigs, path)
        lines = path.read_text().splitlines()
        assert len(lines) == 4
        assert lines[0].startswith("signal_id,max,min,")
        assert len(rows) == 3

    def test_reexport_byte_identical(self, tmp_path, rng):
        sigs = [random_signal(rng, seconds=1.0, rate=200, sid=f"s{i}") for i in range(3)]
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        export_feature_table(sigs, p1)
        export_feature_table(sigs, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rows_match_single_signal_calls(self, tmp_path, rng):
        sigs = [random_signal(rng, seconds=1.0, rate=200, sid=f"s{i}") for i in range(3)]
        rows = export_feature_table(sigs, tmp_path / "f.csv")
        for row in rows:
            direct = extract_features(next(s for s in sigs if s.id == row.signal_id))
            assert row == direct

    def test_sorted_by_id(self, tmp_path, rng):
        sigs = [random_signal(rng, seconds=0.5, rate=100, sid=sid) for sid in ("z", "a", "m")]
        rows = export_feature_table(sigs, tmp_path / "f.csv")
        assert [r.signal_id for r in rows] == ["a", "m", "z"]


def test_spectrogram_csv_round_trip(tmp_path, rng):
    s = random_signal(rng, seconds=1.0, rate=2000)
    spec = log_mel_spectrogram(s)
    path = tmp_path / "spec.csv"
    save_spectrogram_csv(spec, path)
    back = load_spectrogram_csv(path)
    assert np.array_equal(back, spec.data)


def test_waveform_feature_extractor_matches_functions(rng):
    sigs = [random_signal(rng, seconds=1.0, rate=200, sid=f"s{i}") for i in range(4)]
    mat = WaveformFeatureExtractor().fit(sigs).transform(sigs)
    assert mat.shape == (4, 6)
    assert np.allclose(mat[2], extract_features(sigs[2]).values())
