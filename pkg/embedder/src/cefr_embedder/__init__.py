"""Frozen-encoder NDJSON embedding exports for CEFR sentence corpora."""

from .annotate import FUNCTION_WORD_POS, Token, annotate_corpus, annotate_sentence, tokenize
from .encode import (
    EmbedConfig,
    ExportRecord,
    SentenceEncoding,
    encode_corpus,
    encoder_checksum,
    export_corpus,
    load_encoder,
)

__all__ = [
    "EmbedConfig",
    "ExportRecord",
    "FUNCTION_WORD_POS",
    "SentenceEncoding",
    "Token",
    "annotate_corpus",
    "annotate_sentence",
    "encode_corpus",
    "encoder_checksum",
    "export_corpus",
    "load_encoder",
    "tokenize",
]
