"""Synthetic vibration corpora with class-templated captions.

Used when no real caption corpus is available: signals fall into classes
with distinct carrier/envelope parameters, and captions describe a
signal's class with class-specific words plus a category-specific word.
Class words are shared across the three description categories, so
cross-category vocabulary overlap is built in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import CATEGORIES, CaptionRecord, Category, HapticTextPair
from .signals import Origin, SignalProvenance, VibrationSignal, normalize_duration

# One shared word per class (appears in captions of every category, so
# cross-category vocabulary overlap is built in) plus one word per
# (class, category): 8 + 24 + 7 filler words, a ~40-word vocabulary.
SHARED_CLASS_WORDS = ("hum", "knock", "beat", "roll", "tick", "wave", "shake", "chime")

CATEGORY_CLASS_WORDS = {
    Category.SENSORY: (
        "buzzing", "tapping", "pulsing", "rumbling",
        "clicking", "surging", "rattling", "ringing",
    ),
    Category.EMOTIONAL: (
        "calming", "jarring", "soothing", "tense",
        "crisp", "dreamy", "nervous", "cheerful",
    ),
    Category.ASSOCIATIVE: (
        "razor", "woodpecker", "heartbeat", "thunder",
        "keyboard", "ocean", "engine", "doorbell",
    ),
}

FILLER_WORDS = ("it", "feels", "like", "very", "the", "and", "a")


@dataclass
class SyntheticCorpus:
    signals: list[VibrationSignal]
    captions: list[CaptionRecord]

    def signal_map(self) -> dict[str, VibrationSignal]:
        return {s.id: s for s in self.signals}

    def pairs(self) -> list[HapticTextPair]:
        return [HapticTextPair.from_caption(c) for c in self.captions]


def _class_params(class_idx: int, n_classes: int, sample_rate: int):
    nyquist = sample_rate / 2.0
    carrier = 40.0 + (class_idx + 1) * (0.8 * nyquist - 40.0) / n_classes
    am_rate = 1.0 + 0.9 * class_idx
    am_depth = 0.35 + 0.06 * (class_idx % 5)
    square_envelope = class_idx % 2 == 1
    return carrier, am_rate, am_depth, square_envelope


def make_class_signal(
    class_idx: int,
    instance_idx: int,
    rng: np.random.Generator,
    sample_rate: int = 2000,
    n_classes: int = 8,
    duration: float = 10.0,
) -> VibrationSignal:
    """One amplitude-modulated carrier from a class's parameter family,
    with small per-instance jitter."""
    carrier, am_rate, am_depth, square = _class_params(class_idx, n_classes, sample_rate)
    carrier *= 1.0 + rng.uniform(-0.02, 0.02)
    am_rate *= 1.0 + rng.uniform(-0.05, 0.05)
    amplitude = rng.uniform(0.6, 0.95)
    phase = rng.uniform(0, 2 * np.pi)
    am_phase = rng.uniform(0, 2 * np.pi)

    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    modulator = np.sin(2 * np.pi * am_rate * t + am_phase)
    if square:
        modulator = np.sign(modulator)
    envelope = 1.0 - am_depth + am_depth * 0.5 * (1.0 + modulator)
    samples = amplitude * envelope * np.sin(2 * np.pi * carrier * t + phase)
    return VibrationSignal(
        id=f"c{class_idx}s{instance_idx:02d}",
        samples=samples,
        sample_rate=sample_rate,
        provenance=SignalProvenance(
            Origin.PARAMETRIC,
            op_tag=f"synth(class={class_idx}, instance={instance_idx})",
        ),
    )


def _caption_text(class_idx: int, category: Category, rng: np.random.Generator) -> str:
    k = class_idx % len(SHARED_CLASS_WORDS)
    chosen = [SHARED_CLASS_WORDS[k], CATEGORY_CLASS_WORDS[category][k]]
    # occasionally repeat an informative word so caption lengths vary
    if rng.random() < 0.5:
        chosen.append(chosen[int(rng.integers(2))])
    n_fill = int(rng.integers(1, 3))
    chosen.extend(
        FILLER_WORDS[i] for i in rng.choice(len(FILLER_WORDS), size=n_fill, replace=False)
    )
    order = rng.permutation(len(chosen))
    return " ".join(chosen[i] for i in order)


def make_corpus(
    n_classes: int = 8,
    signals_per_class: int = 12,
    captions_per_signal: int = 4,
    sample_rate: int = 2000,
    seed: int = 0,
) -> SyntheticCorpus:
    """Corpus of n_classes x signals_per_class signals, each captioned by
    captions_per_signal participants in all three categories."""
    rng = np.random.default_rng(seed)
    signals: list[VibrationSignal] = []
    captions: list[CaptionRecord] = []
    for class_idx in range(n_classes):
        for inst in range(signals_per_class):
            sig = make_class_signal(class_idx, inst, rng, sample_rate, n_classes)
            signals.append(sig)
            for category in CATEGORIES:
                for part in range(captions_per_signal):
                    captions.append(CaptionRecord(
                        signal_id=sig.id,
                        participant_id=f"p{part}",
                        category=category,
                        text=_caption_text(class_idx, category, rng),
                    ))
    return SyntheticCorpus(signals=signals, captions=captions)


def make_signal_bank(
    count: int,
    sample_rate: int = 200,
    seed: int = 0,
    duration: float = 10.0,
) -> list[VibrationSignal]:
    """A bank of parameter-swept signals (for augmentation-scale runs)."""
    rng = np.random.default_rng(seed)
    signals = []
    for i in range(count):
        sig = make_class_signal(
            class_idx=i % 8,
            instance_idx=i,
            rng=rng,
            sample_rate=sample_rate,
            n_classes=8,
            duration=duration,
        )
        signals.append(VibrationSignal(
            id=f"bank{i:03d}",
            samples=sig.samples,
            sample_rate=sig.sample_rate,
            provenance=sig.provenance,
        ))
    return [normalize_duration(s) for s in signals]
