"""Conditional text generation via a pretrained global text autoencoder and
lightweight per-condition plug-in VAEs over its latent space."""

from .corpus import (
    ConditionDataset,
    LabeledSample,
    Vocabulary,
    build_vocabulary,
    decode_tokens,
    encode_text,
    length_label,
    make_condition_sets,
    tokenize,
)
from .checkpoint import (
    PluginMismatchError,
    load_autoencoder,
    load_plugin,
    pretrain_digest,
    save_autoencoder,
    save_plugin,
)
from .evaluation import (
    ConvTextClassifier,
    EvaluationReport,
    accuracy_log_variance,
    classifier_accuracy,
    distinct_n,
    evaluate,
    length_accuracy,
    train_condition_classifier,
)
from .generation import (
    GenerationRequest,
    generate,
    plugin_generate,
    sample_conditional_prior,
    unconditional_generate,
)
from .plugin import PluginVAE, beta_at, kl_to_standard_normal, train_plugin
from .pretrain import TextAutoencoder, TrainingDivergedError
from .synthetic import make_synthetic_corpus

__all__ = [
    "ConditionDataset",
    "ConvTextClassifier",
    "EvaluationReport",
    "GenerationRequest",
    "LabeledSample",
    "PluginMismatchError",
    "PluginVAE",
    "TextAutoencoder",
    "TrainingDivergedError",
    "Vocabulary",
    "accuracy_log_variance",
    "beta_at",
    "build_vocabulary",
    "classifier_accuracy",
    "decode_tokens",
    "distinct_n",
    "encode_text",
    "evaluate",
    "generate",
    "kl_to_standard_normal",
    "length_accuracy",
    "length_label",
    "load_autoencoder",
    "load_plugin",
    "make_condition_sets",
    "make_synthetic_corpus",
    "plugin_generate",
    "pretrain_digest",
    "sample_conditional_prior",
    "save_autoencoder",
    "save_plugin",
    "tokenize",
    "train_condition_classifier",
    "train_plugin",
    "unconditional_generate",
]

__version__ = "0.1.0"
