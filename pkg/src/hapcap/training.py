"""Supervised contrastive training of the encoder/projection stack.

The loss is standard supervised contrastive learning: for each anchor
embedding, positives are the other batch entries sharing its label and the
denominator runs over every other entry. Each haptic-text pair contributes
its two projected views (haptic and text) to the batch under the same
(signal id, category) label, so captions of one signal and category pull
together across modalities while everything else pushes apart. Gradients
are exact analytic backpropagation through the dense stacks, projections,
and L2 normalization; optimization is Adam.
"""

from __future__ import annotations

import itertools
import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import Category, DatasetSplit, HapticTextPair, PairLabel
from .encoders import NORM_EPS, EncoderState, text_input
from .errors import InvalidInputError
from .retrieval import pooled_inputs, precision_at_k, rank_candidates, uniquify_ids

logger = logging.getLogger(__name__)

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 1e-3
    tau: float = 0.1
    n: int = 3
    m: int = 2
    batch_size: int = 128
    epochs: int = 15
    seed: int = 0
    kappa: float = 100.0
    k: int = 10
    category_scope: str = "all"

    def __post_init__(self):
        if self.alpha <= 0:
            raise InvalidInputError("alpha must be positive")
        if self.tau <= 0:
            raise InvalidInputError("tau must be positive")
        if self.batch_size < 2:
            raise InvalidInputError("batch_size must be >= 2")
        if self.epochs < 0 or self.n < 0 or self.m < 0:
            raise InvalidInputError("epochs, n, and m must be non-negative")
        if self.k < 1 or self.kappa <= 0:
            raise InvalidInputError("k must be >= 1 and kappa positive")
        if self.category_scope != "all":
            Category(self.category_scope)

    def scope_category(self) -> Category | None:
        return None if self.category_scope == "all" else Category(self.category_scope)


@dataclass
class TrainItem:
    """One haptic-text pair reduced to fixed encoder inputs."""
    x_text: np.ndarray  # (embed_dim,) mean token embedding
    x_haptic: np.ndarray  # (2 * MEL_BANDS,) pooled spectrogram stats
    label: PairLabel
    caption_id: str
    signal_id: str


@dataclass
class PairEmbeddingBatch:
    """Embedded batch: per item the concatenated [haptic | text] unit halves."""
    z: np.ndarray  # (B, 2d)
    labels: list[PairLabel]
    d: int

    def __post_init__(self):
        if self.z.ndim != 2 or self.z.shape[0] != len(self.labels):
            raise InvalidInputError("batch embeddings and labels must align")
        if self.z.shape[0] < 2:
            raise InvalidInputError("a batch needs at least two items")
        if self.z.shape[1] != 2 * self.d:
            raise InvalidInputError("z rows must concatenate two d-dimensional halves")

    def views(self) -> tuple[np.ndarray, list[PairLabel]]:
        """Split every item into its two modality views sharing the item label."""
        stacked = np.vstack([self.z[:, : self.d], self.z[:, self.d:]])
        return stacked, list(self.labels) * 2


def supcon_loss(z: np.ndarray, labels: Sequence, tau: float) -> float:
    """Supervised contrastive loss over an embedding batch.

    Mean over anchors with at least one same-label positive of
    -(1/|P(i)|) sum_{j in P(i)} log(exp(z_i.z_j / tau) / sum_{a != i}
    exp(z_i.z_a / tau)). Anchors without positives are skipped; a batch
    with no positives at all is reported as 0 with a warning.
    """
    loss, _ = _supcon_loss_and_coeffs(np.asarray(z, dtype=np.float64), list(labels), tau)
    return loss


def _supcon_loss_and_coeffs(z: np.ndarray, labels: list, tau: float):
    """Loss plus the dL/d(logits) matrix used by backpropagation."""
    if tau <= 0:
        raise InvalidInputError("tau must be positive")
    m = len(labels)
    if z.ndim != 2 or z.shape[0] != m:
        raise InvalidInputError("z must be (batch, dim) aligned with labels")
    if m < 2:
        raise InvalidInputError("a batch needs at least two items")

    codes: dict = {}
    arr = np.array([codes.setdefault(lab, len(codes)) for lab in labels])
    positives = (arr[:, None] == arr[None, :]) & ~np.eye(m, dtype=bool)
    pos_count = positives.sum(axis=1)
    contributing = pos_count > 0
    if not contributing.any():
        warnings.warn("no anchor in the batch has a positive; loss is 0", stacklevel=3)
        return 0.0, np.zeros((m, m))

    logits = (z @ z.T) / tau
    np.fill_diagonal(logits, -np.inf)
    row_max = logits.max(axis=1, keepdims=True)
    exp_shifted = np.exp(logits - row_max)
    denom = exp_shifted.sum(axis=1, keepdims=True)
    log_prob = logits - (row_max + np.log(denom))

    per_anchor = -np.where(positives, log_prob, 0.0).sum(axis=1)[contributing]
    loss = float(np.mean(per_anchor / pos_count[contributing]))

    softmax = exp_shifted / denom
    coeffs = softmax - positives / np.maximum(pos_count, 1)[:, None]
    coeffs *= contributing[:, None] / contributing.sum()
    return loss, coeffs


def pair_batch_loss(batch: PairEmbeddingBatch, tau: float) -> float:
    """Training loss of an embedded pair batch: SupCon over its modality views."""
    return supcon_loss(*batch.views(), tau)


def _tower_forward(stack, proj, x):
    inputs = [np.atleast_2d(x)]
    pre_acts = []
    h = inputs[0]
    for layer in stack:
        a = h @ layer.weight.T + layer.bias
        pre_acts.append(a)
        h = np.maximum(a, 0.0)
        inputs.append(h)
    p = h @ proj.weight.T + proj.bias
    norms = np.sqrt(np.sum(p * p, axis=1, keepdims=True) + NORM_EPS**2)
    return {"inputs": inputs, "pre_acts": pre_acts, "p": p, "norms": norms, "z": p / norms}


def _tower_backward(stack, proj, cache, dz, prefix, grads):
    z, norms = cache["z"], cache["norms"]
    dp = (dz - np.sum(dz * z, axis=1, keepdims=True) * z) / norms
    grads[f"proj_{prefix}.weight"] = dp.T @ cache["inputs"][-1]
    grads[f"proj_{prefix}.bias"] = dp.sum(axis=0)
    dh = dp @ proj.weight
    for i in reversed(range(len(stack))):
        da = dh * (cache["pre_acts"][i] > 0)
        grads[f"{prefix}.{i}.weight"] = da.T @ cache["inputs"][i]
        grads[f"{prefix}.{i}.bias"] = da.sum(axis=0)
        dh = da @ stack[i].weight
    return grads


def embed_pairs(state: EncoderState, items: Sequence[TrainItem]) -> PairEmbeddingBatch:
    x_text = np.stack([it.x_text for it in items])
    x_haptic = np.stack([it.x_haptic for it in items])
    zh = _tower_forward(state.haptic_stack, state.proj_haptic, x_haptic)["z"]
    zt = _tower_forward(state.text_stack, state.proj_text, x_text)["z"]
    return PairEmbeddingBatch(
        z=np.hstack([zh, zt]), labels=[it.label for it in items], d=state.dims.d
    )


def batch_loss(state: EncoderState, items: Sequence[TrainItem], tau: float) -> float:
    return pair_batch_loss(embed_pairs(state, items), tau)


def loss_gradients(
    state: EncoderState, items: Sequence[TrainItem], tau: float
) -> dict[str, np.ndarray]:
    """Analytic gradients of the training loss for every trainable tensor."""
    return _loss_and_gradients(state, items, tau)[1]


def _loss_and_gradients(state, items, tau):
    trainable = state.trainable_names()
    x_text = np.stack([it.x_text for it in items])
    x_haptic = np.stack([it.x_haptic for it in items])
    haptic = _tower_forward(state.haptic_stack, state.proj_haptic, x_haptic)
    text = _tower_forward(state.text_stack, state.proj_text, x_text)

    b = len(items)
    z = np.vstack([haptic["z"], text["z"]])
    labels = [it.label for it in items] * 2
    loss, coeffs = _supcon_loss_and_coeffs(z, labels, tau)
    if not trainable:
        return loss, {}

    dz = (coeffs + coeffs.T) @ z / tau
    grads: dict[str, np.ndarray] = {}
    _tower_backward(state.haptic_stack, state.proj_haptic, haptic, dz[:b], "haptic", grads)
    _tower_backward(state.text_stack, state.proj_text, text, dz[b:], "text", grads)
    return loss, {name: grads[name] for name in trainable}


class Adam:
    """Plain Adam over named tensors, updated in place."""

    def __init__(self, names: Sequence[str], shapes: Mapping[str, tuple], alpha: float):
        self.alpha = alpha
        self.names = sorted(names)
        self.first = {n: np.zeros(shapes[n]) for n in self.names}
        self.second = {n: np.zeros(shapes[n]) for n in self.names}
        self.steps = 0

    def step(self, tensors: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]):
        self.steps += 1
        correct1 = 1.0 - ADAM_BETA1**self.steps
        correct2 = 1.0 - ADAM_BETA2**self.steps
        for name in self.names:
            g = grads[name]
            self.first[name] = ADAM_BETA1 * self.first[name] + (1 - ADAM_BETA1) * g
            self.second[name] = ADAM_BETA2 * self.second[name] + (1 - ADAM_BETA2) * g * g
            m_hat = self.first[name] / correct1
            v_hat = self.second[name] / correct2
            tensors[name] -= self.alpha * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    val_p_at_k: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_p_at_k: float = float("nan")

    def rows(self) -> list[tuple]:
        return [(e.epoch, e.loss, e.val_p_at_k) for e in self.epochs]


def _scope_pairs(pairs: Sequence[HapticTextPair], scope: Category | None):
    if scope is None:
        return list(pairs)
    return [p for p in pairs if p.label.category == scope]


def prepare_items(
    state: EncoderState,
    pairs: Sequence[HapticTextPair],
    pooled: Mapping[str, np.ndarray],
) -> list[TrainItem]:
    """Reduce pairs to fixed encoder inputs (token-embedding means are constant
    because the embedding matrix is frozen)."""
    caption_ids = uniquify_ids([p.caption.caption_id for p in pairs])
    return [
        TrainItem(
            x_text=text_input(state, p.caption.text),
            x_haptic=pooled[p.signal_id],
            label=p.label,
            caption_id=cid,
            signal_id=p.signal_id,
        )
        for p, cid in zip(pairs, caption_ids)
    ]


def _label_aware_batches(
    items: Sequence[TrainItem], batch_size: int, rng: np.random.Generator
) -> list[list[TrainItem]]:
    """Batches built from per-label chunks of two so same-label positives
    usually co-occur; a trailing singleton chunk is allowed."""
    by_label: dict[PairLabel, list[int]] = {}
    for i, it in enumerate(items):
        by_label.setdefault(it.label, []).append(i)
    chunks: list[list[int]] = []
    for label in sorted(by_label, key=lambda l: (l.signal_id, l.category.value)):
        members = by_label[label]
        order = rng.permutation(len(members))
        shuffled = [members[i] for i in order]
        chunks.extend(shuffled[i:i + 2] for i in range(0, len(shuffled), 2))
    chunk_order = rng.permutation(len(chunks))
    flat = [i for c in chunk_order for i in chunks[c]]
    batches = [
        [items[i] for i in flat[start:start + batch_size]]
        for start in range(0, len(flat), batch_size)
    ]
    return [b for b in batches if len(b) >= 2]


def _validation_p_at_k(state: EncoderState, val_items: Sequence[TrainItem], k: int) -> float:
    batch = embed_pairs(state, val_items)
    d = state.dims.d
    cand_z = batch.z[:, d:]  # text halves
    cand_ids = [it.caption_id for it in val_items]
    query_vecs: dict[str, np.ndarray] = {}
    relevant: dict[str, set] = {}
    for row, it in zip(batch.z, val_items):
        query_vecs.setdefault(it.signal_id, row[:d])
        relevant.setdefault(it.signal_id, set()).add(it.caption_id)
    total = 0.0
    for sid in sorted(query_vecs):
        top = rank_candidates(query_vecs[sid], cand_z, cand_ids, k)
        total += precision_at_k([cand_ids[i] for i in top], relevant[sid], k)
    return total / len(query_vecs)


def train(
    state: EncoderState,
    split: DatasetSplit,
    signals,
    config: TrainConfig,
) -> tuple[EncoderState, TrainHistory]:
    """Mini-batch Adam on the contrastive loss with per-epoch validation P@K.

    Returns the checkpoint from the best validation epoch (the input state
    is left untouched). Deterministic for a fixed config and seed.
    """
    scope = config.scope_category()
    train_pairs = _scope_pairs(split.train, scope)
    val_pairs = _scope_pairs(split.valid, scope)
    if not train_pairs:
        raise InvalidInputError("training set is empty for the requested scope")
    if not val_pairs:
        raise InvalidInputError("validation set is empty for the requested scope")

    state = state.copy()
    state.n_trainable_text = config.n
    state.m_trainable_haptic = config.m
    history = TrainHistory()
    if config.epochs == 0:
        return state, history

    pooled = pooled_inputs(signals, [p.signal_id for p in train_pairs + val_pairs])
    train_items = prepare_items(state, train_pairs, pooled)
    val_items = prepare_items(state, val_pairs, pooled)

    rng = np.random.default_rng(config.seed)
    tensors = state.named_tensors()
    trainable = state.trainable_names()
    optimizer = Adam(trainable, {n: tensors[n].shape for n in trainable}, config.alpha)

    best_state = None
    for epoch in range(1, config.epochs + 1):
        losses = []
        for batch in _label_aware_batches(train_items, config.batch_size, rng):
            loss, grads = _loss_and_gradients(state, batch, config.tau)
            losses.append(loss)
            if grads:
                optimizer.step(tensors, grads)
        val_p = _validation_p_at_k(state, val_items, config.k)
        history.epochs.append(EpochStats(epoch, float(np.mean(losses)), val_p))
        if best_state is None or val_p > history.best_val_p_at_k:
            history.best_val_p_at_k = val_p
            history.best_epoch = epoch
            best_state = state.copy()
        logger.info("epoch %d: loss %.4f, val P@%d %.4f", epoch, np.mean(losses),
                    config.k, val_p)
    return best_state, history


@dataclass
class GridCell:
    alpha: float
    tau: float
    n: int
    m: int
    status: str  # 'ok' or 'failed'
    val_p_at_k: float
    best_epoch: int

    def to_row(self) -> tuple:
        return (self.alpha, self.tau, self.n, self.m, self.status,
                self.val_p_at_k, self.best_epoch)


GRID_ALPHAS = (1e-3, 1e-4, 1e-5)
GRID_TAUS = (0.07, 0.1)
GRID_DEPTHS = (1, 2, 3, 4, 5)


def grid_search(
    split: DatasetSplit,
    signals,
    base_config: TrainConfig,
    state_factory: Callable[[TrainConfig], EncoderState],
    alphas: Sequence[float] = GRID_ALPHAS,
    taus: Sequence[float] = GRID_TAUS,
    ns: Sequence[int] = GRID_DEPTHS,
    ms: Sequence[int] = GRID_DEPTHS,
) -> tuple[TrainConfig, list[GridCell]]:
    """Train every (alpha, tau, n, m) cell and rank by validation P@K.

    Cells whose training raises are marked failed and skipped in the
    ranking; ties keep the earliest cell in grid order.
    """
    cells: list[GridCell] = []
    best: tuple[float, int] | None = None  # (val metric, index)
    configs = [
        replace(base_config, alpha=a, tau=t, n=n, m=m)
        for a, t, n, m in itertools.product(alphas, taus, ns, ms)
    ]
    if not configs:
        raise InvalidInputError("empty hyperparameter grid")
    for i, cfg in enumerate(configs):
        try:
            _, history = train(state_factory(cfg), split, signals, cfg)
            cell = GridCell(cfg.alpha, cfg.tau, cfg.n, cfg.m, "ok",
                            history.best_val_p_at_k, history.best_epoch)
        except Exception as exc:  # noqa: BLE001 - cell failures must not kill the sweep
            logger.warning("grid cell alpha=%g tau=%g n=%d m=%d failed: %s",
                           cfg.alpha, cfg.tau, cfg.n, cfg.m, exc)
            cell = GridCell(cfg.alpha, cfg.tau, cfg.n, cfg.m, "failed",
                            float("nan"), 0)
        cells.append(cell)
        if cell.status == "ok" and (best is None or cell.val_p_at_k > best[0]):
            best = (cell.val_p_at_k, i)
    if best is None:
        raise InvalidInputError("every grid cell failed")
    return configs[best[1]], cells
