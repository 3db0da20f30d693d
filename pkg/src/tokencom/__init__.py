"""Context-aware wireless token communication simulator."""

from .channel import (
    ChannelBlock,
    Constellation,
    LogLikTable,
    demodulate,
    modulate,
    noise_variance_for_snr_db,
    sample_fading,
    snr_db,
    square_qam,
    symbol_loglik,
    token_loglik_table,
    transmit,
    transmit_packet,
)
from .codec import (
    NonVocabularyBitsError,
    Vocabulary,
    bits_to_token,
    pack_bits_to_symbol_groups,
    symbols_per_token,
    token_symbol_matrix,
    token_to_bits,
)
from .config import ExperimentConfig, load_config
from .corpus import generate_markov_corpus, load_corpus, packetize
from .detect import DetectionAborted, DetectionState, detect, ml_detect
from .masking import (
    EntropyRecord,
    MaskSet,
    audit_greedy_records,
    context_aware_mask,
    entropy_bits,
    mask_budget,
    random_mask,
)
from .priors import (
    MASK,
    BigramModel,
    ContextModel,
    PriorProtocolError,
    PriorTransportError,
    UniformModel,
    mask_sequence,
    train_ngram,
)
from .sidecar_client import ExternalModel, SidecarClient

__version__ = "0.1.0"

__all__ = [
    "ChannelBlock",
    "Constellation",
    "LogLikTable",
    "demodulate",
    "modulate",
    "noise_variance_for_snr_db",
    "sample_fading",
    "snr_db",
    "square_qam",
    "symbol_loglik",
    "token_loglik_table",
    "transmit",
    "transmit_packet",
    "NonVocabularyBitsError",
    "Vocabulary",
    "bits_to_token",
    "pack_bits_to_symbol_groups",
    "symbols_per_token",
    "token_symbol_matrix",
    "token_to_bits",
    "ExperimentConfig",
    "load_config",
    "generate_markov_corpus",
    "load_corpus",
    "packetize",
    "DetectionAborted",
    "DetectionState",
    "detect",
    "ml_detect",
    "EntropyRecord",
    "MaskSet",
    "audit_greedy_records",
    "context_aware_mask",
    "entropy_bits",
    "mask_budget",
    "random_mask",
    "MASK",
    "BigramModel",
    "ContextModel",
    "PriorProtocolError",
    "PriorTransportError",
    "UniformModel",
    "mask_sequence",
    "train_ngram",
    "ExternalModel",
    "SidecarClient",
]
