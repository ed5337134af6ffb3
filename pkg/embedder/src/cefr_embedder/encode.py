"""Frozen-encoder sentence embeddings via mean-pooled hidden states.

The encoder is never fine-tuned here: we load a pretrained checkpoint,
run it in eval mode, pick one hidden-state layer, and mean-pool the
token vectors of each sentence.  Layer indexing is over the encoder's
hidden-state sets with index 0 being the embedding-layer output, so a
12-layer encoder accepts indices 0..12 and the default 11 selects the
next-to-last transformer layer.  Special boundary tokens ([CLS], [SEP],
padding) are excluded from the pool unless explicitly requested; both
choices are recorded in the export metadata.

Pooling happens in float64 regardless of the model dtype, so the
exported sentence vector equals the exact column mean of the exported
per-token states.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .annotate import Token, annotate_corpus

__all__ = [
    "EmbedConfig",
    "ExportRecord",
    "SentenceEncoding",
    "encode_corpus",
    "encoder_checksum",
    "export_corpus",
    "load_encoder",
]

log = logging.getLogger(__name__)

ANNOTATOR_NAME = "builtin-rules/0.1"


@dataclass(frozen=True)
class EmbedConfig:
    """Where the vectors come from and how they are pooled."""

    encoder: str
    layer: int = 11
    batch_size: int = 16
    device: str = "cpu"
    include_special_tokens: bool = False

    def __post_init__(self):
        if self.layer < 0:
            raise ValueError(f"layer index must be >= 0, got {self.layer}")
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class SentenceEncoding:
    index: int
    vector: np.ndarray
    token_states: np.ndarray  # (tokens, hidden); exactly what was pooled


@dataclass(frozen=True)
class ExportRecord:
    id: str
    text: str
    labels: tuple[str, ...]
    extra: dict = field(default_factory=dict)


def load_encoder(cfg: EmbedConfig):
    """Load tokenizer and model; validates the layer bound."""
    from transformers import AutoModel, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(cfg.encoder)
    model = AutoModel.from_pretrained(cfg.encoder)
    model.eval()
    model.to(cfg.device)
    depth = int(model.config.num_hidden_layers)
    if cfg.layer > depth:
        raise ValueError(
            f"layer index {cfg.layer} exceeds encoder depth {depth} "
            f"(valid: 0..{depth}, 0 is the embedding output)")
    return tokenizer, model


def encoder_checksum(model) -> str:
    """SHA-256 over parameter names and bytes, stable across loads."""
    h = hashlib.sha256()
    state = model.state_dict()
    for name in sorted(state):
        h.update(name.encode("utf-8"))
        h.update(state[name].cpu().numpy().tobytes())
    return h.hexdigest()


def _check_texts(texts):
    if not texts:
        raise ValueError("texts must be non-empty")
    for i, t in enumerate(texts):
        if not t or not t.strip():
            raise ValueError(f"sentence {i} is blank")


def encode_corpus(texts, cfg: EmbedConfig, tokenizer=None, model=None):
    """Encode sentences in input order; returns one record per text.

    Over-long sentences are truncated to the tokenizer maximum with a
    logged warning; this is the only lossy step.
    """
    _check_texts(texts)
    if tokenizer is None or model is None:
        tokenizer, model = load_encoder(cfg)
    depth = int(model.config.num_hidden_layers)
    if cfg.layer > depth:
        raise ValueError(
            f"layer index {cfg.layer} exceeds encoder depth {depth} "
            f"(valid: 0..{depth}, 0 is the embedding output)")
    max_len = int(tokenizer.model_max_length)

    out = []
    with torch.no_grad():
        for start in range(0, len(texts), cfg.batch_size):
            batch = list(texts[start:start + cfg.batch_size])
            for j, t in enumerate(batch):
                full = len(tokenizer(t, truncation=False)["input_ids"])
                if full > max_len:
                    log.warning("sentence %d truncated from %d to %d tokens",
                                start + j, full, max_len)
            enc = tokenizer(batch, padding=True, truncation=True,
                            max_length=max_len,
                            return_special_tokens_mask=True,
                            return_tensors="pt")
            special = enc.pop("special_tokens_mask")
            enc = {k: v.to(cfg.device) for k, v in enc.items()}
            states = model(**enc, output_hidden_states=True).hidden_states
            layer = states[cfg.layer].cpu().numpy().astype(np.float64)
            keep = enc["attention_mask"].cpu().numpy().astype(bool)
            if not cfg.include_special_tokens:
                keep &= ~special.numpy().astype(bool)
            for j in range(len(batch)):
                token_states = layer[j][keep[j]]
                if token_states.shape[0] == 0:
                    raise ValueError(
                        f"sentence {start + j} has no tokens to pool")
                out.append(SentenceEncoding(
                    index=start + j,
                    vector=token_states.mean(axis=0),
                    token_states=token_states))
    return out


def _token_json(tokens: list[Token]) -> list[dict]:
    return [t.to_json() for t in tokens]


def export_corpus(records, cfg: EmbedConfig, out_path: str,
                  tokenizer=None, model=None, annotate: bool = True,
                  debug_states_path: str | None = None) -> dict:
    """Write NDJSON embedding records plus a metadata sidecar.

    Records are written strictly in input order.  Returns the metadata
    document (also written to out_path + ".meta.json").
    """
    records = list(records)
    if tokenizer is None or model is None:
        tokenizer, model = load_encoder(cfg)
    encodings = encode_corpus([r.text for r in records], cfg,
                              tokenizer=tokenizer, model=model)
    annotations = annotate_corpus([r.text for r in records]) if annotate else {}

    debug_fh = open(debug_states_path, "w", encoding="utf-8") \
        if debug_states_path else None
    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            for rec, encoding in zip(records, encodings):
                doc = {"id": rec.id, "text": rec.text,
                       "labels": list(rec.labels), **rec.extra,
                       "vector": encoding.vector.tolist()}
                if encoding.index in annotations:
                    doc["tokens"] = _token_json(annotations[encoding.index])
                fh.write(json.dumps(doc, ensure_ascii=False) + "\n")
                if debug_fh is not None:
                    debug_fh.write(json.dumps(
                        {"id": rec.id,
                         "states": encoding.token_states.tolist()}) + "\n")
    finally:
        if debug_fh is not None:
            debug_fh.close()

    meta = {
        "encoder": cfg.encoder,
        "encoder_sha256": encoder_checksum(model),
        "hidden_size": int(model.config.hidden_size),
        "encoder_depth": int(model.config.num_hidden_layers),
        "layer_index": cfg.layer,
        "layer_indexing": "hidden-state sets, 0 = embedding output",
        "pooling": ("mean over all attended tokens"
                    if cfg.include_special_tokens else
                    "mean over attended tokens excluding special tokens"),
        "annotator": ANNOTATOR_NAME if annotate else None,
        "records": len(records),
    }
    with open(out_path + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return meta
