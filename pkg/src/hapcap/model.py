"""sklearn-style facade over the contrastive retrieval pipeline.

`HapticCaptionRetriever` wires vocabulary building, encoder
initialization, contrastive training, and retrieval behind the familiar
fit/predict/score surface so the pipeline composes with scikit-learn
tooling (get_params/set_params, clone).
"""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dataset import DatasetSplit, split_dataset
from .encoders import EncoderDims, build_vocab, embed_signal, init_encoder_state
from .retrieval import RankedList, build_caption_index, evaluate_run, retrieve_top_k
from .training import TrainConfig, train


class HapticCaptionRetriever(BaseEstimator):
    """Dual-encoder retriever: fit on haptic-text pairs, retrieve captions
    for query signals.

    Parameters mirror TrainConfig plus the encoder dimensions; `d` is the
    shared embedding dimension used by both towers.
    """

    def __init__(self, d=64, embed_dim=64, hidden=128, text_layers=3,
                 haptic_layers=3, alpha=1e-3, tau=0.1, n=3, m=2,
                 batch_size=128, epochs=15, kappa=100.0, k=10,
                 category_scope="all", min_count=1, seed=0):
        self.d = d
        self.embed_dim = embed_dim
        self.hidden = hidden
        self.text_layers = text_layers
        self.haptic_layers = haptic_layers
        self.alpha = alpha
        self.tau = tau
        self.n = n
        self.m = m
        self.batch_size = batch_size
        self.epochs = epochs
        self.kappa = kappa
        self.k = k
        self.category_scope = category_scope
        self.min_count = min_count
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            alpha=self.alpha, tau=self.tau, n=self.n, m=self.m,
            batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
            kappa=self.kappa, k=self.k, category_scope=self.category_scope,
        )

    def _dims(self) -> EncoderDims:
        return EncoderDims(
            embed_dim=self.embed_dim, hidden=self.hidden,
            text_layers=self.text_layers, haptic_layers=self.haptic_layers,
            d1=self.d, d2=self.d, d=self.d,
        )

    def fit(self, X, y=None, *, signals, valid=None):
        """Train the encoders on haptic-text pairs.

        X is the training pair list; `valid` holds the early-stopping pairs
        (a 90/10 carve-out of X when omitted); `signals` maps signal ids to
        VibrationSignal objects.
        """
        if valid is None:
            carved = split_dataset(list(X), seed=self.seed, fractions=(0.9, 0.1, 0.0))
            split = DatasetSplit(train=carved.train, valid=carved.valid, test=[])
        else:
            split = DatasetSplit(train=list(X), valid=list(valid), test=[])
        vocab = build_vocab([p.caption for p in split.train], min_count=self.min_count)
        state = init_encoder_state(vocab, self._dims(), seed=self.seed,
                                   n_trainable_text=self.n, m_trainable_haptic=self.m)
        self.state_, self.history_ = train(state, split, signals, self._train_config())
        self.index_ = None
        return self

    def _check_fitted(self):
        if not hasattr(self, "state_"):
            raise NotFittedError("call fit() before using the retriever")

    def index_captions(self, pairs):
        """Build the candidate index retrieve()/predict() rank against."""
        self._check_fitted()
        self.index_ = build_caption_index(self.state_, list(pairs), self.category_scope)
        return self

    def retrieve(self, signal, k=None) -> RankedList:
        self._check_fitted()
        if self.index_ is None:
            raise NotFittedError("call index_captions() before retrieve()")
        query = embed_signal(self.state_, signal)
        return retrieve_top_k(query, self.index_, k or self.k, kappa=self.kappa,
                              query_signal_id=signal.id)

    def predict(self, X) -> list[list[str]]:
        """Top-k candidate caption ids for each query signal in X."""
        return [self.retrieve(signal).candidate_ids for signal in X]

    def evaluate(self, pairs, *, signals):
        self._check_fitted()
        return evaluate_run(self.state_, list(pairs), signals, self._train_config())

    def score(self, X, y=None, *, signals) -> float:
        """Mean P@k over the pairs in X (first report row's scope)."""
        return self.evaluate(X, signals=signals).rows[0].p_at_k
