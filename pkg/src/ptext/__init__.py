"""Audio-free prompt tuning for contrastive language-audio classification.

Prompt tokens are learned from labeled captions through a frozen text
encoder, at two granularities (sentence-level and word-level), and applied
to surrogate or precomputed audio features at test time.
"""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    LabeledCaption,
    LabeledCorpus,
    SynonymDict,
    TokenSeq,
    build_synonym_dict,
    collect_captions,
    generate_template_captions,
    split_corpus,
    tokenize,
)
from .encoder import EncoderWeights, PromptBank, encode_caption, encode_class_prompt, init_encoder
from .evalkit import EvalResult, FeatureFile, evaluate, transfer_eval
from .losses import ce_loss, ranking_loss, total_loss
from .scoring import aggregate_fine, coarse_scores, ensemble, word_scores
from .trainer import TrainConfig, TrainReport, init_prompts, train

__all__ = [
    "EncoderWeights",
    "EvalResult",
    "FeatureFile",
    "LabeledCaption",
    "LabeledCorpus",
    "PromptBank",
    "SynonymDict",
    "TokenSeq",
    "TrainConfig",
    "TrainReport",
    "aggregate_fine",
    "build_synonym_dict",
    "ce_loss",
    "coarse_scores",
    "collect_captions",
    "encode_caption",
    "encode_class_prompt",
    "ensemble",
    "evaluate",
    "generate_template_captions",
    "init_encoder",
    "init_prompts",
    "load_checkpoint",
    "ranking_loss",
    "save_checkpoint",
    "split_corpus",
    "tokenize",
    "total_loss",
    "train",
    "transfer_eval",
    "word_scores",
]
