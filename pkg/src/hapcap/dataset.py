"""Caption corpus handling: loading, pairing, agreement filtering, splits,
and diversity statistics.

Captions arrive as JSONL rows (signal_id, participant_id, category, text).
Each caption pairs with its signal under a (signal id, category) class
label; captions that disagree with other participants' descriptions of the
same signal and category can be filtered out by mean cosine similarity.
"""

from __future__ import annotations

import json
import logging
import re
import warnings
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import CorpusFormatError, InvalidInputError

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_NA_VALUES = {"na", "n/a", "not applicable"}

_CATEGORY_ALIASES = {
    "sensory": "sensory",
    "emotional": "emotional",
    "emotion": "emotional",
    "associative": "associative",
    "association": "associative",
}


class Category(str, Enum):
    SENSORY = "sensory"
    EMOTIONAL = "emotional"
    ASSOCIATIVE = "associative"

    @classmethod
    def parse(cls, value: str) -> "Category":
        key = str(value).strip().lower()
        if key not in _CATEGORY_ALIASES:
            raise InvalidInputError(f"unknown category {value!r}")
        return cls(_CATEGORY_ALIASES[key])


CATEGORIES = (Category.SENSORY, Category.EMOTIONAL, Category.ASSOCIATIVE)


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on whitespace and punctuation."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class CaptionRecord:
    signal_id: str
    participant_id: str
    category: Category
    text: str

    @property
    def caption_id(self) -> str:
        return f"{self.signal_id}:{self.category.value}:{self.participant_id}"


@dataclass(frozen=True)
class PairLabel:
    signal_id: str
    category: Category


@dataclass(frozen=True)
class HapticTextPair:
    signal_id: str
    caption: CaptionRecord
    label: PairLabel

    @classmethod
    def from_caption(cls, caption: CaptionRecord) -> "HapticTextPair":
        return cls(
            signal_id=caption.signal_id,
            caption=caption,
            label=PairLabel(caption.signal_id, caption.category),
        )


@dataclass
class DatasetSplit:
    train: list[HapticTextPair]
    valid: list[HapticTextPair]
    test: list[HapticTextPair]

    def __iter__(self):
        return iter((self.train, self.valid, self.test))


def _is_na(text: str) -> bool:
    return text.strip().lower() in _NA_VALUES or not text.strip()


def load_captions(path) -> list[CaptionRecord]:
    """Parse a JSONL caption file, dropping NA/empty rows.

    Raises CorpusFormatError with the offending line number on malformed
    JSON, missing keys, or an unknown category. Dropped-row counts go to
    the module logger.
    """
    path = Path(path)
    records = []
    dropped = 0
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path.name}:{lineno}: bad JSON ({exc})") from exc
            try:
                text = str(row["text"])
                if _is_na(text):
                    dropped += 1
                    continue
                records.append(CaptionRecord(
                    signal_id=str(row["signal_id"]),
                    participant_id=str(row["participant_id"]),
                    category=Category.parse(row["category"]),
                    text=text,
                ))
            except KeyError as exc:
                raise CorpusFormatError(f"{path.name}:{lineno}: missing key {exc}") from exc
            except InvalidInputError as exc:
                raise CorpusFormatError(f"{path.name}:{lineno}: {exc}") from exc
    logger.info("loaded %d captions from %s (%d NA/empty rows dropped)",
                len(records), path, dropped)
    return records


def write_captions(path, captions: Iterable[CaptionRecord]) -> None:
    path = Path(path)
    with path.open("w") as fh:
        for c in captions:
            fh.write(json.dumps({
                "signal_id": c.signal_id,
                "participant_id": c.participant_id,
                "category": c.category.value,
                "text": c.text,
            }, sort_keys=True) + "\n")


def build_pairs(captions: Sequence[CaptionRecord], signals) -> list[HapticTextPair]:
    """One labeled pair per caption; every caption's signal must exist."""
    known = {s if isinstance(s, str) else s.id for s in signals}
    dangling = sorted({c.signal_id for c in captions} - known)
    if dangling:
        raise InvalidInputError(
            f"captions reference {len(dangling)} unknown signal id(s): "
            + ", ".join(dangling[:10])
        )
    return [HapticTextPair.from_caption(c) for c in captions]


def _group_key(c: CaptionRecord):
    return (c.signal_id, c.category)


def agreement_scores(
    captions: Sequence[CaptionRecord],
    text_embedder: Callable[[Sequence[str]], np.ndarray],
) -> dict[CaptionRecord, float | None]:
    """Mean cosine similarity of each caption to other participants'
    captions in its (signal, category) group.

    Captions alone in their group (no other participant) get None and are
    treated as unscored.
    """
    groups: dict[tuple, list[CaptionRecord]] = defaultdict(list)
    for c in captions:
        groups[_group_key(c)].append(c)

    texts = [c.text for c in captions]
    embeddings = np.asarray(text_embedder(texts), dtype=np.float64)
    if embeddings.shape[0] != len(captions):
        raise InvalidInputError("text_embedder must return one embedding per caption")
    norms = np.linalg.norm(embeddings, axis=1)
    emb_by_caption = dict(zip(captions, zip(embeddings, norms)))

    def cosine(a, b):
        (va, na), (vb, nb) = a, b
        if na == 0 or nb == 0:
            return 0.0
        return float(np.dot(va, vb) / (na * nb))

    scores: dict[CaptionRecord, float | None] = {}
    for members in groups.values():
        for c in members:
            others = [m for m in members if m.participant_id != c.participant_id]
            if not others:
                scores[c] = None
                continue
            sims = [cosine(emb_by_caption[c], emb_by_caption[o]) for o in others]
            scores[c] = float(np.mean(sims))
    return scores


def filter_low_agreement(
    captions: Sequence[CaptionRecord],
    scores: Mapping[CaptionRecord, float | None],
    threshold: float = 0.5,
) -> tuple[list[CaptionRecord], list[CaptionRecord]]:
    """Drop captions whose agreement score is strictly below the threshold.

    Unscored captions (singleton groups) are always kept.
    """
    kept, removed = [], []
    for c in captions:
        score = scores.get(c)
        if score is not None and score < threshold:
            removed.append(c)
        else:
            kept.append(c)
    return kept, removed


def surviving_signal_ids(kept: Sequence[CaptionRecord]) -> set[str]:
    """Signals that still have at least one caption in any category."""
    return {c.signal_id for c in kept}


def _canonical_pair_key(p: HapticTextPair):
    c = p.caption
    return (c.signal_id, c.category.value, c.participant_id, c.text)


def split_dataset(
    pairs: Sequence[HapticTextPair],
    seed: int,
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> DatasetSplit:
    """Random 70/10/20 partition, stratified by category, deterministic per seed."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidInputError(f"fractions must sum to 1, got {fractions}")
    if not pairs:
        raise InvalidInputError("cannot split an empty pair set")

    rng = np.random.default_rng(seed)
    by_category: dict[Category, list[HapticTextPair]] = defaultdict(list)
    for p in sorted(pairs, key=_canonical_pair_key):
        by_category[p.label.category].append(p)

    buckets: tuple[list, list, list] = ([], [], [])
    for category in CATEGORIES:
        group = by_category.get(category)
        if not group:
            continue
        order = rng.permutation(len(group))
        counts = _largest_remainder(len(group), fractions)
        cursor = 0
        for bucket, count in zip(buckets, counts):
            bucket.extend(group[i] for i in order[cursor:cursor + count])
            cursor += count

    for frac, bucket, name in zip(fractions, buckets, ("train", "valid", "test")):
        if frac > 0 and not bucket:
            raise InvalidInputError(
                f"too few pairs ({len(pairs)}) to populate the {name} split"
            )
    return DatasetSplit(*buckets)


def _largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    raw = [total * f for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    # hand out the leftover pairs to the largest fractional remainders,
    # ties resolved in declaration order
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: total - sum(counts)]:
        counts[i] += 1
    return counts


def diversity_stats(
    captions: Sequence[CaptionRecord], n: int
) -> dict[Category, tuple[float, float]]:
    """Per-category (distinct-n, mean n-grams per caption).

    distinct-n is unique n-grams over total n-grams in the category; the
    mean counts n-grams per caption (0 when a caption is shorter than n).
    """
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    out: dict[Category, tuple[float, float]] = {}
    by_category: dict[Category, list[CaptionRecord]] = defaultdict(list)
    for c in captions:
        by_category[c.category].append(c)
    for category, members in by_category.items():
        total = 0
        unique = set()
        per_caption = []
        for c in members:
            tokens = tokenize(c.text)
            grams = [tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)]
            per_caption.append(len(grams))
            total += len(grams)
            unique.update(grams)
        if total == 0:
            warnings.warn(
                f"no {n}-grams in category {category.value}; reporting 0",
                stacklevel=2,
            )
            out[category] = (0.0, 0.0)
        else:
            out[category] = (len(unique) / total, float(np.mean(per_caption)))
    return out
