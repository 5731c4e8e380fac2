"""Waveform features and the log-mel spectrogram frontend.

The scalar features (amplitude stats, zero-crossing rate, envelope
frequency) summarize signal diversity; the 128-band log-mel spectrogram
is the input representation consumed by the haptic encoder.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import InvalidInputError
from .signals import VibrationSignal, _one_pole_lowpass

MEL_BANDS = 128
MEL_FLOOR = 1e-10
ENVELOPE_CUTOFF_HZ = 20.0
# A non-DC spectral peak must reach this fraction of the DC magnitude for
# the envelope to count as modulated; below it the envelope frequency is 0.
ENVELOPE_PEAK_REL_FLOOR = 0.1

FEATURE_COLUMNS = ("max", "min", "rms", "energy", "zero_crossing_rate", "envelope_frequency_hz")


@dataclass(frozen=True)
class FeatureVector:
    signal_id: str
    max: float
    min: float
    rms: float
    energy: float
    zero_crossing_rate: float
    envelope_frequency_hz: float

    def values(self) -> tuple[float, ...]:
        return (self.max, self.min, self.rms, self.energy,
                self.zero_crossing_rate, self.envelope_frequency_hz)


@dataclass
class LogMelSpectrogram:
    data: np.ndarray  # frames x MEL_BANDS log-energies
    window_seconds: float
    hop_seconds: float

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]


def zero_crossing_rate(s: VibrationSignal) -> float:
    """Fraction of adjacent sample pairs whose signs differ (zero counts as positive)."""
    x = s.samples
    if x.size < 2:
        raise InvalidInputError("zero-crossing rate needs at least two samples")
    signs = np.where(x >= 0, 1, -1)
    return float(np.count_nonzero(signs[1:] != signs[:-1]) / (x.size - 1))


def amplitude_stats(s: VibrationSignal) -> tuple[float, float, float, float]:
    """Return (max, min, rms, energy) with energy = sum of squared samples."""
    x = s.samples
    energy = float(np.sum(x * x))
    rms = float(np.sqrt(energy / x.size))
    return float(np.max(x)), float(np.min(x)), rms, energy


def envelope_frequency(s: VibrationSignal) -> float:
    """Dominant oscillation rate of the amplitude envelope, in Hz.

    The envelope is the rectified signal passed through a 20 Hz one-pole
    low-pass; its DFT's largest non-DC bin gives the frequency. A peak
    below 10% of the DC magnitude means an effectively constant envelope,
    reported as 0.
    """
    envelope = _one_pole_lowpass(np.abs(s.samples), ENVELOPE_CUTOFF_HZ, s.sample_rate)
    spectrum = np.abs(np.fft.rfft(envelope))
    if spectrum.size < 2:
        return 0.0
    dc = spectrum[0]
    peak_bin = 1 + int(np.argmax(spectrum[1:]))
    if dc <= 0 or spectrum[peak_bin] < ENVELOPE_PEAK_REL_FLOOR * dc:
        return 0.0
    return float(peak_bin * s.sample_rate / envelope.size)


def extract_features(s: VibrationSignal) -> FeatureVector:
    mx, mn, rms, energy = amplitude_stats(s)
    return FeatureVector(
        signal_id=s.id,
        max=mx, min=mn, rms=rms, energy=energy,
        zero_crossing_rate=zero_crossing_rate(s),
        envelope_frequency_hz=envelope_frequency(s),
    )


def _hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def _mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(num_bands: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular mel filters (num_bands x rfft bins of n_fft) spanning 0..rate/2."""
    mel_points = np.linspace(_hz_to_mel(0.0), _hz_to_mel(sample_rate / 2.0), num_bands + 2)
    hz_points = _mel_to_hz(mel_points)
    bin_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    bank = np.zeros((num_bands, bin_freqs.size))
    for m in range(num_bands):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (bin_freqs - left) / max(center - left, 1e-12)
        down = (right - bin_freqs) / max(right - center, 1e-12)
        bank[m] = np.clip(np.minimum(up, down), 0.0, None)
    return bank


def log_mel_spectrogram(s: VibrationSignal, window_s: float = 0.025,
                        hop_s: float = 0.010) -> LogMelSpectrogram:
    """Hann-windowed power spectrogram through 128 triangular mel filters, log-compressed.

    Frame count is 1 + floor((num_samples - window) / hop); cells are
    log(max(mel energy, 1e-10)).
    """
    window = int(round(window_s * s.sample_rate))
    hop = int(round(hop_s * s.sample_rate))
    if window < 2 or hop < 1:
        raise InvalidInputError("window/hop too short for this sample rate")
    x = s.samples
    if x.size < window:
        raise InvalidInputError(
            f"signal of {x.size} samples is shorter than one {window}-sample window"
        )
    num_frames = 1 + (x.size - window) // hop
    idx = np.arange(window)[None, :] + hop * np.arange(num_frames)[:, None]
    frames = x[idx] * np.hanning(window)[None, :]
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    bank = mel_filterbank(MEL_BANDS, window, s.sample_rate)
    mel_energy = power @ bank.T
    return LogMelSpectrogram(
        data=np.log(np.maximum(mel_energy, MEL_FLOOR)),
        window_seconds=window_s,
        hop_seconds=hop_s,
    )


def pooled_spectrogram_stats(s: VibrationSignal, window_s: float = 0.025,
                             hop_s: float = 0.010) -> np.ndarray:
    """Per-mel-band temporal mean and std, concatenated (2 * MEL_BANDS values)."""
    spec = log_mel_spectrogram(s, window_s, hop_s).data
    return np.concatenate([spec.mean(axis=0), spec.std(axis=0)])


def export_feature_table(signals, path) -> list[FeatureVector]:
    """Write one CSV row per signal (ordered by id) and return the rows."""
    rows = sorted((extract_features(s) for s in signals), key=lambda fv: fv.signal_id)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("signal_id",) + FEATURE_COLUMNS)
        for fv in rows:
            writer.writerow((fv.signal_id,) + tuple(repr(v) for v in fv.values()))
    return rows


def save_spectrogram_csv(spec: LogMelSpectrogram, path) -> None:
    """Debug dump: a shape header line, then one frame per row."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"shape={spec.num_frames}x{spec.data.shape[1]}\n")
        writer = csv.writer(fh)
        for row in spec.data:
            writer.writerow(tuple(repr(float(v)) for v in row))


def load_spectrogram_csv(path) -> np.ndarray:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("shape="):
        raise InvalidInputError(f"{path}: missing shape header")
    frames, bands = (int(v) for v in lines[0].split("=", 1)[1].split("x"))
    data = np.array([[float(v) for v in line.split(",")] for line in lines[1:]], dtype=np.float64)
    if data.shape != (frames, bands):
        raise InvalidInputError(f"{path}: shape header {frames}x{bands} != data {data.shape}")
    return data


class WaveformFeatureExtractor(TransformerMixin, BaseEstimator):
    """Transformer mapping a list of VibrationSignal to an (n, 6) feature matrix.

    Columns follow FEATURE_COLUMNS; stateless, so fit is a no-op.
    """

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        return np.array([extract_features(s).values() for s in X], dtype=np.float64)

    def get_feature_names_out(self, input_features=None):
        return np.asarray(FEATURE_COLUMNS, dtype=object)
