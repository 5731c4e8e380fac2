"""Trainable text and haptic encoders plus the shared-space projections.

Both encoders are small dense ReLU stacks over fixed inputs: the text side
mean-pools a token-embedding matrix, the haptic side consumes pooled
log-mel statistics (per-band mean and std). A linear projection per
modality maps into a common d-dimensional space where embeddings are
L2-normalized.

Layer counting for fine-tuning treats the projection as the top layer of
its tower: with `n` trainable text layers, n=0 freezes everything, n=1
trains only the text projection, and larger n unfreezes dense layers from
the top down. The token-embedding matrix is always frozen.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import CaptionRecord, tokenize
from .errors import CheckpointError, InvalidInputError
from .features import MEL_BANDS, pooled_spectrogram_stats
from .signals import VibrationSignal

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"

HAPTIC_INPUT_DIM = 2 * MEL_BANDS


@dataclass(frozen=True)
class Vocabulary:
    token_to_index: dict[str, int]

    def __post_init__(self):
        if self.token_to_index.get(PAD_TOKEN) != 0 or self.token_to_index.get(UNK_TOKEN) != 1:
            raise InvalidInputError("vocabulary must map PAD to 0 and UNK to 1")
        if sorted(self.token_to_index.values()) != list(range(len(self.token_to_index))):
            raise InvalidInputError("vocabulary indices must be dense from 0")

    def __len__(self) -> int:
        return len(self.token_to_index)

    def encode(self, tokens: Sequence[str]) -> list[int]:
        unk = self.token_to_index[UNK_TOKEN]
        return [self.token_to_index.get(t, unk) for t in tokens]

    def ordered_tokens(self) -> list[str]:
        return [t for t, _ in sorted(self.token_to_index.items(), key=lambda kv: kv[1])]


def build_vocab(captions: Sequence[CaptionRecord], min_count: int = 1) -> Vocabulary:
    """Index corpus tokens by descending frequency, then lexicographically."""
    if not captions:
        raise InvalidInputError("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    for c in captions:
        for tok in tokenize(c.text):
            counts[tok] = counts.get(tok, 0) + 1
    kept = sorted(
        (t for t, n in counts.items() if n >= min_count),
        key=lambda t: (-counts[t], t),
    )
    mapping = {PAD_TOKEN: 0, UNK_TOKEN: 1}
    mapping.update({t: i + 2 for i, t in enumerate(kept)})
    return Vocabulary(mapping)


@dataclass
class DenseLayer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)

    @property
    def in_dim(self) -> int:
        return self.weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]

    def copy(self) -> "DenseLayer":
        return DenseLayer(self.weight.copy(), self.bias.copy())


@dataclass(frozen=True)
class EncoderDims:
    embed_dim: int = 64
    hidden: int = 128
    text_layers: int = 3
    haptic_layers: int = 3
    d1: int = 64  # haptic pre-projection dimension
    d2: int = 64  # text pre-projection dimension
    d: int = 64  # shared space

    def __post_init__(self):
        for name in ("embed_dim", "hidden", "text_layers", "haptic_layers", "d1", "d2", "d"):
            if getattr(self, name) < 1:
                raise InvalidInputError(f"{name} must be >= 1")


@dataclass
class EncoderState:
    dims: EncoderDims
    vocab: Vocabulary
    embedding: np.ndarray  # (V, embed_dim), always frozen
    text_stack: list[DenseLayer]
    haptic_stack: list[DenseLayer]
    proj_text: DenseLayer
    proj_haptic: DenseLayer
    n_trainable_text: int = 3
    m_trainable_haptic: int = 2

    def copy(self) -> "EncoderState":
        return EncoderState(
            dims=self.dims,
            vocab=self.vocab,
            embedding=self.embedding.copy(),
            text_stack=[layer.copy() for layer in self.text_stack],
            haptic_stack=[layer.copy() for layer in self.haptic_stack],
            proj_text=self.proj_text.copy(),
            proj_haptic=self.proj_haptic.copy(),
            n_trainable_text=self.n_trainable_text,
            m_trainable_haptic=self.m_trainable_haptic,
        )

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {"embedding": self.embedding}
        for prefix, stack in (("text", self.text_stack), ("haptic", self.haptic_stack)):
            for i, layer in enumerate(stack):
                out[f"{prefix}.{i}.weight"] = layer.weight
                out[f"{prefix}.{i}.bias"] = layer.bias
        out["proj_text.weight"] = self.proj_text.weight
        out["proj_text.bias"] = self.proj_text.bias
        out["proj_haptic.weight"] = self.proj_haptic.weight
        out["proj_haptic.bias"] = self.proj_haptic.bias
        return out

    def trainable_names(self) -> list[str]:
        """Tensor names unfrozen by the current depth knobs, top-down per tower."""
        names: list[str] = []
        for prefix, stack, knob in (
            ("text", self.text_stack, self.n_trainable_text),
            ("haptic", self.haptic_stack, self.m_trainable_haptic),
        ):
            tower = [f"{prefix}.{i}" for i in range(len(stack))] + [f"proj_{prefix}"]
            for slot in tower[max(len(tower) - knob, 0):]:
                names.extend([f"{slot}.weight", f"{slot}.bias"])
        return names


def _xavier(rng: np.random.Generator, out_dim: int, in_dim: int) -> DenseLayer:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return DenseLayer(
        weight=rng.uniform(-limit, limit, size=(out_dim, in_dim)),
        bias=np.zeros(out_dim),
    )


def _stack_dims(in_dim: int, hidden: int, out_dim: int, layers: int) -> list[tuple[int, int]]:
    if layers == 1:
        return [(out_dim, in_dim)]
    dims = [(hidden, in_dim)]
    dims += [(hidden, hidden)] * (layers - 2)
    dims.append((out_dim, hidden))
    return dims


def init_encoder_state(
    vocab: Vocabulary,
    dims: EncoderDims = EncoderDims(),
    seed: int = 0,
    n_trainable_text: int = 3,
    m_trainable_haptic: int = 2,
) -> EncoderState:
    """Xavier-uniform initialization of all weights from one seeded generator."""
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / (len(vocab) + dims.embed_dim))
    embedding = rng.uniform(-limit, limit, size=(len(vocab), dims.embed_dim))
    text_stack = [
        _xavier(rng, o, i)
        for o, i in _stack_dims(dims.embed_dim, dims.hidden, dims.d2, dims.text_layers)
    ]
    proj_text = _xavier(rng, dims.d, dims.d2)
    haptic_stack = [
        _xavier(rng, o, i)
        for o, i in _stack_dims(HAPTIC_INPUT_DIM, dims.hidden, dims.d1, dims.haptic_layers)
    ]
    proj_haptic = _xavier(rng, dims.d, dims.d1)
    return EncoderState(
        dims=dims,
        vocab=vocab,
        embedding=embedding,
        text_stack=text_stack,
        haptic_stack=haptic_stack,
        proj_text=proj_text,
        proj_haptic=proj_haptic,
        n_trainable_text=n_trainable_text,
        m_trainable_haptic=m_trainable_haptic,
    )


def text_input(state: EncoderState, text: str) -> np.ndarray:
    """Mean token embedding; empty or fully-unknown text falls back to UNK."""
    indices = state.vocab.encode(tokenize(text)) or [state.vocab.token_to_index[UNK_TOKEN]]
    return state.embedding[indices].mean(axis=0)


def stack_forward(stack: Sequence[DenseLayer], x: np.ndarray) -> np.ndarray:
    """ReLU dense stack over rows of x (B, in) -> (B, out)."""
    h = np.atleast_2d(x)
    for layer in stack:
        h = np.maximum(h @ layer.weight.T + layer.bias, 0.0)
    return h


def encode_text(state: EncoderState, text: str) -> np.ndarray:
    """Pre-projection text representation (dimension d2)."""
    return stack_forward(state.text_stack, text_input(state, text))[0]


def encode_haptic(state: EncoderState, signal: VibrationSignal) -> np.ndarray:
    """Pre-projection haptic representation (dimension d1)."""
    return stack_forward(state.haptic_stack, pooled_spectrogram_stats(signal))[0]


NORM_EPS = 1e-12


def _normalize_rows(z: np.ndarray) -> np.ndarray:
    # smooth normalization: differentiable even for all-zero rows
    norms = np.sqrt(np.sum(z * z, axis=1, keepdims=True) + NORM_EPS**2)
    return z / norms


def project_batch(state: EncoderState, u: np.ndarray, modality: str) -> np.ndarray:
    """Linear projection into the shared space, rows L2-normalized."""
    if modality == "text":
        layer, expect = state.proj_text, state.dims.d2
    elif modality == "haptic":
        layer, expect = state.proj_haptic, state.dims.d1
    else:
        raise InvalidInputError(f"unknown modality {modality!r}")
    u = np.atleast_2d(u)
    if u.shape[1] != expect:
        raise InvalidInputError(
            f"{modality} projection expects dimension {expect}, got {u.shape[1]}"
        )
    return _normalize_rows(u @ layer.weight.T + layer.bias)


def project(state: EncoderState, embedding: np.ndarray, modality: str) -> np.ndarray:
    return project_batch(state, embedding, modality)[0]


def embed_texts(state: EncoderState, texts: Sequence[str]) -> np.ndarray:
    """Projected, unit-norm text embeddings for a list of strings."""
    x = np.stack([text_input(state, t) for t in texts])
    return project_batch(state, stack_forward(state.text_stack, x), "text")


def embed_signal(state: EncoderState, signal: VibrationSignal) -> np.ndarray:
    return project(state, encode_haptic(state, signal), "haptic")


def text_embedding_fn(state: EncoderState):
    """Adapter usable as the agreement filter's pluggable text embedder."""
    return lambda texts: embed_texts(state, list(texts))


_CHECKPOINT_MAGIC = "HAPCAP-CKPT v1"


def save_state(state: EncoderState, path) -> None:
    """Serialize to a versioned binary: JSON header plus raw float64 data.

    The byte stream is a pure function of the state, so identical states
    produce identical files.
    """
    tensors = state.named_tensors()
    order = sorted(tensors)
    header = {
        "dims": {
            "embed_dim": state.dims.embed_dim,
            "hidden": state.dims.hidden,
            "text_layers": state.dims.text_layers,
            "haptic_layers": state.dims.haptic_layers,
            "d1": state.dims.d1,
            "d2": state.dims.d2,
            "d": state.dims.d,
        },
        "n_trainable_text": state.n_trainable_text,
        "m_trainable_haptic": state.m_trainable_haptic,
        "vocab": state.vocab.ordered_tokens(),
        "tensors": [[name, list(tensors[name].shape)] for name in order],
    }
    blob = b"".join(np.ascontiguousarray(tensors[name], dtype="<f8").tobytes() for name in order)
    with Path(path).open("wb") as fh:
        fh.write(_CHECKPOINT_MAGIC.encode() + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(blob)


def load_state(path) -> EncoderState:
    raw = Path(path).read_bytes()
    magic, _, rest = raw.partition(b"\n")
    if magic.decode(errors="replace") != _CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a recognized checkpoint (magic {magic!r})")
    header_bytes, _, blob = rest.partition(b"\n")
    try:
        header = json.loads(header_bytes)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: corrupt header: {exc}") from exc

    tensors: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in header["tensors"]:
        count = int(np.prod(shape))
        data = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).copy()
        tensors[name] = data.reshape(shape)
        offset += count * 8
    if offset != len(blob):
        raise CheckpointError(f"{path}: payload size mismatch")

    tok = header["vocab"]
    vocab = Vocabulary({t: i for i, t in enumerate(tok)})
    dims = EncoderDims(**header["dims"])

    def layer(prefix):
        return DenseLayer(tensors[f"{prefix}.weight"], tensors[f"{prefix}.bias"])

    return EncoderState(
        dims=dims,
        vocab=vocab,
        embedding=tensors["embedding"],
        text_stack=[layer(f"text.{i}") for i in range(dims.text_layers)],
        haptic_stack=[layer(f"haptic.{i}") for i in range(dims.haptic_layers)],
        proj_text=layer("proj_text"),
        proj_haptic=layer("proj_haptic"),
        n_trainable_text=int(header["n_trainable_text"]),
        m_trainable_haptic=int(header["m_trainable_haptic"]),
    )


# re-exported for callers composing states by hand
__all__ = [
    "Vocabulary", "build_vocab", "DenseLayer", "EncoderDims", "EncoderState",
    "init_encoder_state", "text_input", "stack_forward", "encode_text",
    "encode_haptic", "project_batch", "project", "embed_texts", "embed_signal",
    "text_embedding_fn", "save_state", "load_state",
    "PAD_TOKEN", "UNK_TOKEN", "HAPTIC_INPUT_DIM",
]
