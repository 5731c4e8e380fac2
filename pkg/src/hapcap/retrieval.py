"""Caption retrieval by cross-modal similarity and the IR metric suite.

Queries are haptic embeddings; candidates are projected caption
embeddings. Scores are a softmax over scaled dot products, but rankings
are computed on the dot products directly (the softmax is monotone), with
ties broken by ascending candidate id. Metrics: P@K, R@K, mAP@K, nDCG@K
with binary relevance (a candidate is relevant when its label matches the
query signal, and the category too in single-category scope).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .dataset import CATEGORIES, Category, HapticTextPair, PairLabel
from .encoders import EncoderState, embed_texts, project_batch, stack_forward
from .errors import InvalidInputError
from .features import pooled_spectrogram_stats
from .signals import VibrationSignal

logger = logging.getLogger(__name__)


@dataclass
class RetrievalIndex:
    ids: list[str]
    embeddings: np.ndarray  # (N, d), unit rows
    labels: list[PairLabel]
    scope: str = "all"

    def __post_init__(self):
        if len(self.ids) != len(self.labels) or self.embeddings.shape[0] != len(self.ids):
            raise InvalidInputError("index ids, labels, and embeddings must align")

    def __len__(self) -> int:
        return len(self.ids)


@dataclass
class RankedList:
    query_signal_id: str
    candidate_ids: list[str]
    scores: list[float]
    requested_k: int

    @property
    def truncated(self) -> bool:
        return len(self.candidate_ids) < self.requested_k


def uniquify_ids(ids: Sequence[str]) -> list[str]:
    """Deterministically disambiguate duplicate ids with a #<n> suffix."""
    seen: dict[str, int] = {}
    out = []
    for i in ids:
        count = seen.get(i, 0)
        seen[i] = count + 1
        out.append(i if count == 0 else f"{i}#{count}")
    return out


def build_caption_index(
    state: EncoderState,
    pairs: Sequence[HapticTextPair],
    scope: str | Category = "all",
) -> RetrievalIndex:
    """Embed the captions of `pairs` as retrieval candidates."""
    if scope != "all":
        category = Category(scope)
        pairs = [p for p in pairs if p.label.category == category]
        scope = category.value
    if not pairs:
        raise InvalidInputError("no candidate captions for the requested scope")
    return RetrievalIndex(
        ids=uniquify_ids([p.caption.caption_id for p in pairs]),
        embeddings=embed_texts(state, [p.caption.text for p in pairs]),
        labels=[p.label for p in pairs],
        scope=str(scope),
    )


def similarity_scores(query: np.ndarray, index: RetrievalIndex, kappa: float) -> np.ndarray:
    """Softmax over kappa-scaled dot products; one probability per candidate."""
    if len(index) == 0:
        raise InvalidInputError("cannot score against an empty index")
    logits = kappa * (index.embeddings @ np.asarray(query, dtype=np.float64))
    logits -= logits.max()
    e = np.exp(logits)
    return e / e.sum()


def rank_candidates(
    query: np.ndarray,
    embeddings: np.ndarray,
    ids: Sequence[str],
    k: int,
) -> list[int]:
    """Indices of the top-k candidates by dot product, ties by ascending id."""
    dots = embeddings @ np.asarray(query, dtype=np.float64)
    order = sorted(range(len(ids)), key=lambda i: (-dots[i], ids[i]))
    return order[:k]


def retrieve_top_k(
    query: np.ndarray,
    index: RetrievalIndex,
    k: int,
    kappa: float | None = None,
    query_signal_id: str = "",
) -> RankedList:
    """Top-k candidates; scores are softmax probabilities when kappa is given,
    raw dot products otherwise. Asking for more than the index holds returns
    everything and flags the list as truncated."""
    if k < 1:
        raise InvalidInputError("k must be >= 1")
    if len(index) == 0:
        raise InvalidInputError("cannot retrieve from an empty index")
    if k > len(index):
        logger.warning("requested top-%d from an index of %d candidates", k, len(index))
    top = rank_candidates(query, index.embeddings, index.ids, k)
    if kappa is None:
        scores = (index.embeddings @ np.asarray(query, dtype=np.float64))[top]
    else:
        scores = similarity_scores(query, index, kappa)[top]
    return RankedList(
        query_signal_id=query_signal_id,
        candidate_ids=[index.ids[i] for i in top],
        scores=[float(s) for s in scores],
        requested_k=k,
    )


def _ranked_ids(ranked) -> Sequence[str]:
    return ranked.candidate_ids if isinstance(ranked, RankedList) else ranked


def precision_at_k(ranked, relevant_set: set, k: int) -> float:
    ids = _ranked_ids(ranked)[:k]
    return sum(1 for i in ids if i in relevant_set) / k


def recall_at_k(ranked, relevant_set: set, k: int) -> float:
    if not relevant_set:
        logger.warning("recall undefined without relevant items; reporting 0")
        return 0.0
    ids = _ranked_ids(ranked)[:k]
    return sum(1 for i in ids if i in relevant_set) / len(relevant_set)


def average_precision_at_k(ranked, relevant_set: set, k: int) -> float:
    """Sum of precision at each relevant rank <= k over min(|relevant|, k)."""
    if not relevant_set:
        return 0.0
    ids = _ranked_ids(ranked)[:k]
    hits = 0
    total = 0.0
    for rank, cid in enumerate(ids, start=1):
        if cid in relevant_set:
            hits += 1
            total += hits / rank
    return total / min(len(relevant_set), k)


def ndcg_at_k(ranked, relevant_set: set, k: int) -> float:
    """Binary-gain nDCG: DCG over the ideal DCG, 0 when nothing is relevant."""
    if not relevant_set:
        return 0.0
    ids = _ranked_ids(ranked)[:k]
    dcg = sum(1.0 / np.log2(rank + 1) for rank, cid in enumerate(ids, start=1)
              if cid in relevant_set)
    ideal = sum(1.0 / np.log2(rank + 1)
                for rank in range(1, min(len(relevant_set), k) + 1))
    return float(dcg / ideal)


@dataclass
class MetricsRow:
    scope: str
    p_at_k: float
    r_at_k: float
    map_at_k: float
    ndcg_at_k: float
    query_count: int

    def to_dict(self) -> dict:
        return {
            "scope": self.scope,
            "p_at_k": self.p_at_k,
            "r_at_k": self.r_at_k,
            "map_at_k": self.map_at_k,
            "ndcg_at_k": self.ndcg_at_k,
            "query_count": self.query_count,
        }


@dataclass
class MetricsReport:
    k: int
    rows: list[MetricsRow]
    per_query: list[dict] = field(default_factory=list)

    def row(self, scope: str) -> MetricsRow:
        for r in self.rows:
            if r.scope == scope:
                return r
        raise KeyError(scope)

    def to_dict(self) -> dict:
        return {"k": self.k, "rows": [r.to_dict() for r in self.rows]}

    def format_table(self) -> str:
        """Aligned text table; P/R/mAP scaled x100, nDCG left in [0, 1]."""
        header = f"{'scope':<12} {'P@%d' % self.k:>8} {'R@%d' % self.k:>8} " \
                 f"{'mAP@%d' % self.k:>8} {'nDCG@%d' % self.k:>9} {'queries':>8}"
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.scope:<12} {100 * r.p_at_k:>8.2f} {100 * r.r_at_k:>8.2f} "
                f"{100 * r.map_at_k:>8.2f} {r.ndcg_at_k:>9.4f} {r.query_count:>8}"
            )
        return "\n".join(lines)


def _as_signal_map(signals) -> dict[str, VibrationSignal]:
    if isinstance(signals, Mapping):
        return dict(signals)
    return {s.id: s for s in signals}


def pooled_inputs(signals, signal_ids) -> dict[str, np.ndarray]:
    """Pooled spectrogram statistics per signal id (encoder-independent)."""
    by_id = _as_signal_map(signals)
    missing = sorted(set(signal_ids) - set(by_id))
    if missing:
        raise InvalidInputError(f"missing signals for ids: {', '.join(missing[:10])}")
    return {sid: pooled_spectrogram_stats(by_id[sid]) for sid in sorted(set(signal_ids))}


def _embed_queries(state: EncoderState, pooled: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    sids = sorted(pooled)
    x = np.stack([pooled[s] for s in sids])
    z = project_batch(state, stack_forward(state.haptic_stack, x), "haptic")
    return dict(zip(sids, z))


def _evaluate_category(
    state: EncoderState,
    pairs: Sequence[HapticTextPair],
    pooled: dict[str, np.ndarray],
    category: Category | None,
    k: int,
    per_query: list | None = None,
) -> MetricsRow:
    """Metrics for one candidate scope (a single category, or None for combined).

    Queries are the distinct signals with at least one relevant candidate in
    scope; relevance means a matching signal id (and category, when scoped).
    """
    scope_name = category.value if category else "combined"
    selected = [p for p in pairs if category is None or p.label.category == category]
    if not selected:
        return MetricsRow(scope_name, 0.0, 0.0, 0.0, 0.0, 0)

    ids = uniquify_ids([p.caption.caption_id for p in selected])
    embeddings = embed_texts(state, [p.caption.text for p in selected])
    relevant_by_signal: dict[str, set] = {}
    for cid, p in zip(ids, selected):
        relevant_by_signal.setdefault(p.signal_id, set()).add(cid)

    queries = _embed_queries(state, {s: pooled[s] for s in relevant_by_signal})
    p_sum = r_sum = ap_sum = ndcg_sum = 0.0
    for sid in sorted(relevant_by_signal):
        top = rank_candidates(queries[sid], embeddings, ids, k)
        ranked = [ids[i] for i in top]
        relevant = relevant_by_signal[sid]
        p = precision_at_k(ranked, relevant, k)
        r = recall_at_k(ranked, relevant, k)
        ap = average_precision_at_k(ranked, relevant, k)
        nd = ndcg_at_k(ranked, relevant, k)
        p_sum += p
        r_sum += r
        ap_sum += ap
        ndcg_sum += nd
        if per_query is not None:
            per_query.append({
                "scope": scope_name, "signal_id": sid,
                "p_at_k": p, "r_at_k": r, "ap_at_k": ap, "ndcg_at_k": nd,
            })
    n = len(relevant_by_signal)
    return MetricsRow(scope_name, p_sum / n, r_sum / n, ap_sum / n, ndcg_sum / n, n)


def evaluate_run(
    state: EncoderState,
    test_pairs: Sequence[HapticTextPair],
    signals,
    config,
    collect_per_query: bool = False,
) -> MetricsReport:
    """Full evaluation over the test pairs.

    With category_scope 'all' the report carries a combined row (candidates
    from every category, relevance by signal id alone) plus one row per
    category (candidates and relevance restricted). A single-category scope
    yields just that category's row.
    """
    if not test_pairs:
        raise InvalidInputError("cannot evaluate an empty test set")
    pooled = pooled_inputs(signals, [p.signal_id for p in test_pairs])
    per_query: list | None = [] if collect_per_query else None
    scope = config.scope_category()
    if scope is None:
        rows = [_evaluate_category(state, test_pairs, pooled, None, config.k, per_query)]
        rows += [
            _evaluate_category(state, test_pairs, pooled, cat, config.k, per_query)
            for cat in CATEGORIES
        ]
    else:
        rows = [_evaluate_category(state, test_pairs, pooled, scope, config.k, per_query)]
    return MetricsReport(k=config.k, rows=rows, per_query=per_query or [])


@dataclass
class ZeroShotGrid:
    k: int
    cells: dict[tuple[str, str], MetricsRow]

    def cell(self, train_category, test_category) -> MetricsRow:
        return self.cells[(Category(train_category).value, Category(test_category).value)]

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "cells": [
                {"train_category": tc, "test_category": ec, **row.to_dict()}
                for (tc, ec), row in sorted(self.cells.items())
            ],
        }

    def diagonal_mean_p_at_k(self) -> float:
        return float(np.mean([
            row.p_at_k for (tc, ec), row in self.cells.items() if tc == ec
        ]))

    def off_diagonal_mean_p_at_k(self) -> float:
        return float(np.mean([
            row.p_at_k for (tc, ec), row in self.cells.items() if tc != ec
        ]))

    def format_table(self) -> str:
        cats = [c.value for c in CATEGORIES]
        width = max(len(c) for c in cats) + 2
        corner = "train / test"
        header = f"{corner:<{width + 2}}" + "".join(f"{c:>{width + 8}}" for c in cats)
        lines = [f"P@{self.k} (x100), rows = training category", header]
        for tc in cats:
            cells = "".join(f"{100 * self.cells[(tc, ec)].p_at_k:>{width + 8}.2f}" for ec in cats)
            lines.append(f"{tc:<{width + 2}}" + cells)
        return "\n".join(lines)


def zero_shot_matrix(
    states: Mapping,
    test_pairs: Sequence[HapticTextPair],
    signals,
    config,
) -> ZeroShotGrid:
    """Evaluate each category-trained state against every category's captions."""
    by_category: dict[Category, EncoderState] = {}
    for key, value in states.items():
        by_category[Category(key)] = value
    for cat in CATEGORIES:
        if cat not in by_category:
            raise InvalidInputError(f"missing trained state for category {cat.value!r}")
    if not test_pairs:
        raise InvalidInputError("cannot evaluate an empty test set")

    pooled = pooled_inputs(signals, [p.signal_id for p in test_pairs])
    cells: dict[tuple[str, str], MetricsRow] = {}
    for train_cat in CATEGORIES:
        state = by_category[train_cat]
        for test_cat in CATEGORIES:
            row = _evaluate_category(state, test_pairs, pooled, test_cat, config.k)
            cells[(train_cat.value, test_cat.value)] = row
    return ZeroShotGrid(k=config.k, cells=cells)
