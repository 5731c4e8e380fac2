"""hapcap: vibration-signal augmentation, caption curation, contrastive
haptic-text alignment, and ranked retrieval evaluation."""

from .dataset import (
    CATEGORIES,
    CaptionRecord,
    Category,
    DatasetSplit,
    HapticTextPair,
    PairLabel,
    agreement_scores,
    build_pairs,
    diversity_stats,
    filter_low_agreement,
    load_captions,
    split_dataset,
)
from .encoders import (
    EncoderDims,
    EncoderState,
    Vocabulary,
    build_vocab,
    encode_haptic,
    encode_text,
    init_encoder_state,
    load_state,
    project,
    save_state,
)
from .errors import CheckpointError, CorpusFormatError, InvalidInputError
from .features import (
    FeatureVector,
    LogMelSpectrogram,
    WaveformFeatureExtractor,
    amplitude_stats,
    envelope_frequency,
    export_feature_table,
    extract_features,
    log_mel_spectrogram,
    zero_crossing_rate,
)
from .model import HapticCaptionRetriever
from .retrieval import (
    MetricsReport,
    RankedList,
    RetrievalIndex,
    average_precision_at_k,
    build_caption_index,
    evaluate_run,
    ndcg_at_k,
    precision_at_k,
    recall_at_k,
    retrieve_top_k,
    similarity_scores,
    zero_shot_matrix,
)
from .signals import (
    AUGMENT_NOISE_FRACTION,
    SignalProvenance,
    VibrationSignal,
    amplify,
    augment_suite,
    inject_noise,
    low_pass_filter,
    mix_signals,
    normalize_duration,
    repeat_segment,
    stretch,
    time_reverse,
)
from .training import (
    PairEmbeddingBatch,
    TrainConfig,
    TrainHistory,
    grid_search,
    loss_gradients,
    pair_batch_loss,
    supcon_loss,
    train,
)

__version__ = "0.1.0"
