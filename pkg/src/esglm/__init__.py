"""esglm: desk-scale domain-adaptive language model pipeline.

WordPiece tokenization, masked-language-model pre-training on a domain
corpus, relevance-based excerpt extraction from long filings, binary
classification of quarterly environmental-score changes, baselines, and a
reporting harness.
"""

from .model import ModelConfig, ParameterSet, TrainConfig, init_params
from .tokenizer import Vocab, decode, encode, prepare_input, train_vocab

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "ParameterSet",
    "TrainConfig",
    "Vocab",
    "decode",
    "encode",
    "init_params",
    "prepare_input",
    "train_vocab",
]
