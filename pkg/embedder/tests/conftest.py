"""Shared fixture: a tiny randomly initialized BERT saved to disk.

Built locally so the suite never touches the network; HF offline mode
is forced before transformers loads anything.
"""

import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

import pytest

VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "the", "a", "an", "cat", "dog", "bird", "sat", "ran", "flew",
    "on", "in", "under", "mat", "tree", "roof", "quickly", "quietly",
    "and", "or", "but", "red", "blue", "small", "very", "it", "they",
    "saw", "was", "were", "is", "big", "old", "new", "house", "garden",
    "january", "monday", "1999", "3rd", "met", "we", "park", "walk",
    "##s", "##ed", "##ing", ".", ",", "!", "?", "'",
]

MODEL_MAX_TOKENS = 16  # deliberately small so truncation is testable


@pytest.fixture(scope="session")
def encoder_dir(tmp_path_factory):
    import torch
    from transformers import BertConfig, BertModel, BertTokenizer

    out = tmp_path_factory.mktemp("tiny-bert")
    vocab_file = out / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n", encoding="utf-8")

    torch.manual_seed(0)
    config = BertConfig(
        vocab_size=len(VOCAB), hidden_size=32, num_hidden_layers=2,
        num_attention_heads=2, intermediate_size=64,
        max_position_embeddings=64)
    model = BertModel(config)
    model.eval()
    model.save_pretrained(out)

    tokenizer = BertTokenizer(vocab_file=str(vocab_file), do_lower_case=True)
    tokenizer.model_max_length = MODEL_MAX_TOKENS
    tokenizer.save_pretrained(out)
    return str(out)
