"""Vibration signals and the transforms used to grow a signal corpus.

A signal is a mono amplitude waveform in [-1, 1] at a fixed sample rate.
All transforms are pure: they return new signals carrying provenance
(origin, parent ids, and an op tag describing the transform), and any
randomness is driven by an explicit seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import InvalidInputError

TARGET_SECONDS = 10.0

# The fixed augmentation suite: every source signal yields exactly these
# eight variants (single ops plus each pairwise combo once).
AUGMENT_STRETCH_FACTORS = (0.8, 1.25)
AUGMENT_GAINS = (0.7, 1.3)
AUGMENT_NOISE_FRACTION = 0.05


class Origin(str, Enum):
    IMPORTED = "imported"
    PARAMETRIC = "parametric"
    TRANSFORMED = "transformed"
    AUGMENTED = "augmented"


@dataclass(frozen=True)
class SignalProvenance:
    origin: Origin
    parent_ids: tuple[str, ...] = ()
    op_tag: str = ""

    def __post_init__(self):
        if self.origin in (Origin.TRANSFORMED, Origin.AUGMENTED) and not self.parent_ids:
            raise InvalidInputError(
                f"{self.origin.value} provenance requires at least one parent id"
            )


@dataclass(eq=False)
class VibrationSignal:
    id: str
    samples: np.ndarray
    sample_rate: int
    provenance: SignalProvenance = field(
        default_factory=lambda: SignalProvenance(Origin.IMPORTED)
    )

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InvalidInputError(f"signal {self.id!r}: samples must be a non-empty 1-D array")
        if not isinstance(self.sample_rate, (int, np.integer)) or self.sample_rate <= 0:
            raise InvalidInputError(f"signal {self.id!r}: sample_rate must be a positive integer")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise InvalidInputError(f"signal {self.id!r}: samples must be finite")
        peak = float(np.max(np.abs(self.samples)))
        if peak > 1.0:
            raise InvalidInputError(f"signal {self.id!r}: samples exceed [-1, 1] (peak {peak:.6g})")

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate

    def is_normalized(self, target_seconds: float = TARGET_SECONDS) -> bool:
        return self.samples.size == int(round(target_seconds * self.sample_rate))


def _derived(parent: VibrationSignal, new_id, samples, origin, op_tag,
             extra_parents: Sequence[str] = ()) -> VibrationSignal:
    parents = (parent.id, *extra_parents)
    return VibrationSignal(
        id=new_id,
        samples=np.clip(samples, -1.0, 1.0),
        sample_rate=parent.sample_rate,
        provenance=SignalProvenance(origin, parents, op_tag),
    )


def _tile_truncate(samples: np.ndarray, target_len: int) -> np.ndarray:
    if samples.size >= target_len:
        return samples[:target_len].copy()
    reps = -(-target_len // samples.size)
    return np.tile(samples, reps)[:target_len]


def normalize_duration(s: VibrationSignal, target_seconds: float = TARGET_SECONDS) -> VibrationSignal:
    """Fix the length to round(target_seconds * rate) samples.

    Shorter signals are tiled end-to-end and truncated; longer signals keep
    only their leading portion. The output keeps the input id.
    """
    if target_seconds <= 0:
        raise InvalidInputError("target_seconds must be positive")
    target_len = int(round(target_seconds * s.sample_rate))
    if target_len < 1:
        raise InvalidInputError("target duration shorter than one sample")
    out = _tile_truncate(s.samples, target_len)
    return _derived(
        s, s.id, out, Origin.TRANSFORMED,
        f"normalize_duration(target_seconds={target_seconds:g})",
    )


def time_reverse(s: VibrationSignal) -> VibrationSignal:
    """Play the signal backwards (e.g. a ramp-up becomes a ramp-down)."""
    return _derived(s, f"{s.id}.rev", s.samples[::-1], Origin.TRANSFORMED, "time_reverse")


def repeat_segment(s: VibrationSignal, start_sample: int, end_sample: int,
                   repeat_count: int) -> VibrationSignal:
    """Splice repeat_count consecutive copies of samples[start:end) in place,
    then re-normalize to the standard duration."""
    n = s.samples.size
    if not (0 <= start_sample < end_sample <= n):
        raise InvalidInputError(
            f"segment [{start_sample}, {end_sample}) out of range for length {n}"
        )
    if repeat_count < 1:
        raise InvalidInputError("repeat_count must be >= 1")
    seg = s.samples[start_sample:end_sample]
    spliced = np.concatenate(
        [s.samples[:start_sample], np.tile(seg, repeat_count), s.samples[end_sample:]]
    )
    out = _tile_truncate(spliced, int(round(TARGET_SECONDS * s.sample_rate)))
    return _derived(
        s, f"{s.id}.rep", out, Origin.TRANSFORMED,
        f"repeat_segment(start={start_sample}, end={end_sample}, count={repeat_count})",
    )


def mix_signals(signals: Sequence[VibrationSignal], weights: Sequence[float]) -> VibrationSignal:
    """Weighted sample-wise sum of equal-length signals.

    The sum is rescaled so its peak is min(1, peak of the raw sum): a mix
    that stays in range is untouched, an over-range mix is brought back to
    unit peak.
    """
    if len(signals) < 2:
        raise InvalidInputError("mixing requires at least two signals")
    if len(weights) != len(signals):
        raise InvalidInputError("weights must match signals one-to-one")
    rate = signals[0].sample_rate
    length = signals[0].samples.size
    for s in signals[1:]:
        if s.sample_rate != rate:
            raise InvalidInputError("mixed signals must share a sample rate")
        if s.samples.size != length:
            raise InvalidInputError("mixed signals must share a length (normalize first)")
    mixed = np.zeros(length)
    for s, w in zip(signals, weights):
        mixed += float(w) * s.samples
    peak = float(np.max(np.abs(mixed)))
    if peak > 1.0:
        mixed *= 1.0 / peak
    first = signals[0]
    tag_weights = ",".join(f"{float(w):g}" for w in weights)
    return _derived(
        first,
        "mix(" + ",".join(s.id for s in signals) + ")",
        mixed,
        Origin.TRANSFORMED,
        f"mix_signals(weights=[{tag_weights}])",
        extra_parents=[s.id for s in signals[1:]],
    )


def low_pass_filter(s: VibrationSignal, cutoff_hz: float) -> VibrationSignal:
    """First-order recursive low-pass with unit DC gain.

    y[n] = y[n-1] + k * (x[n] - y[n-1]) with k = 1 - exp(-2*pi*fc/fs), so a
    unit impulse decays as k * (1-k)^n.
    """
    samples = _one_pole_lowpass(s.samples, cutoff_hz, s.sample_rate)
    return _derived(
        s, f"{s.id}.lpf", samples, Origin.TRANSFORMED,
        f"low_pass_filter(cutoff_hz={cutoff_hz:g})",
    )


def _one_pole_lowpass(x: np.ndarray, cutoff_hz: float, sample_rate: int) -> np.ndarray:
    if not (0 < cutoff_hz < sample_rate / 2):
        raise InvalidInputError(
            f"cutoff {cutoff_hz} Hz outside (0, {sample_rate / 2}) for rate {sample_rate}"
        )
    k = 1.0 - np.exp(-2.0 * np.pi * cutoff_hz / sample_rate)
    # scipy.signal.lfilter evaluates the same recurrence; kept explicit via
    # lfilter for speed on long signals.
    from scipy.signal import lfilter

    return lfilter([k], [1.0, -(1.0 - k)], x)


def stretch(s: VibrationSignal, factor: float) -> VibrationSignal:
    """Scale duration by `factor` via linear interpolation, then re-normalize.

    Output sample j is the input linearly interpolated at position j/factor,
    holding the final sample beyond the original end.
    """
    if factor <= 0:
        raise InvalidInputError("stretch factor must be positive")
    n = s.samples.size
    new_len = max(1, int(round(n * factor)))
    positions = np.arange(new_len) / factor
    out = np.interp(positions, np.arange(n), s.samples)
    out = _tile_truncate(out, int(round(TARGET_SECONDS * s.sample_rate)))
    return _derived(
        s, f"{s.id}.stretch{factor:g}", out, Origin.AUGMENTED,
        f"stretch(factor={factor:g})",
    )


def amplify(s: VibrationSignal, gain: float) -> VibrationSignal:
    """Multiply every sample by `gain`, saturating at the [-1, 1] rails."""
    if gain <= 0:
        raise InvalidInputError("gain must be positive")
    return _derived(
        s, f"{s.id}.amp{gain:g}", np.clip(s.samples * gain, -1.0, 1.0),
        Origin.AUGMENTED, f"amplify(gain={gain:g})",
    )


def inject_noise(s: VibrationSignal, noise_amplitude_fraction: float, seed: int) -> VibrationSignal:
    """Add zero-mean Gaussian noise with std = fraction * RMS(s), then clip."""
    if noise_amplitude_fraction < 0:
        raise InvalidInputError("noise fraction must be >= 0")
    out = s.samples.copy()
    if noise_amplitude_fraction > 0:
        rms = float(np.sqrt(np.mean(s.samples**2)))
        rng = np.random.default_rng(seed)
        out = out + rng.normal(0.0, noise_amplitude_fraction * rms, size=out.size)
    return _derived(
        s, f"{s.id}.noise{noise_amplitude_fraction:g}", np.clip(out, -1.0, 1.0),
        Origin.AUGMENTED, f"inject_noise(fraction={noise_amplitude_fraction:g}, seed={seed})",
    )


def _suite_ops(seed: int):
    """The eight (name, function) variants applied by augment_suite."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF])
    child_seeds = [int(c.generate_state(1)[0]) for c in ss.spawn(8)]

    def noisy(sig, fraction, idx):
        return inject_noise(sig, fraction, child_seeds[idx])

    f1, f2 = AUGMENT_STRETCH_FACTORS
    g1, g2 = AUGMENT_GAINS
    nf = AUGMENT_NOISE_FRACTION
    return [
        (f"stretch{f1:g}", lambda s: stretch(s, f1)),
        (f"stretch{f2:g}", lambda s: stretch(s, f2)),
        (f"amp{g1:g}", lambda s: amplify(s, g1)),
        (f"amp{g2:g}", lambda s: amplify(s, g2)),
        (f"noise{nf:g}", lambda s: noisy(s, nf, 4)),
        (f"stretch{f1:g}+amp{g2:g}", lambda s: amplify(stretch(s, f1), g2)),
        (f"stretch{f2:g}+noise{nf:g}", lambda s: noisy(stretch(s, f2), nf, 6)),
        (f"amp{g1:g}+noise{nf:g}", lambda s: noisy(amplify(s, g1), nf, 7)),
    ]


def augment_suite(s: VibrationSignal, seed: int) -> list[VibrationSignal]:
    """Produce the fixed suite of 8 augmented variants of a normalized signal.

    Variants: stretch x{0.8, 1.25}, amplify x{0.7, 1.3}, noise x{0.05}, and
    the three pairwise combos (stretch 0.8 + amplify 1.3, stretch 1.25 +
    noise 0.05, amplify 0.7 + noise 0.05). Each output is re-normalized to
    the standard duration and records the source signal as its only parent.
    """
    if not s.is_normalized():
        raise InvalidInputError(
            f"signal {s.id!r} must be duration-normalized before augment_suite"
        )
    variants = []
    for name, op in _suite_ops(seed):
        v = normalize_duration(op(s))
        v = replace(
            v,
            id=f"{s.id}.{name}",
            provenance=SignalProvenance(Origin.AUGMENTED, (s.id,), name),
        )
        variants.append(v)
    return variants
