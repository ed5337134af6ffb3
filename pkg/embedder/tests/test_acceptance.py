"""End-to-end contract with the consumer package.

The export must parse cleanly with cefrkit's NDJSON reader, re-export
byte-for-byte equal vectors, and expose debug token states whose mean
(pooled by cefrkit's own mean_pool) reproduces each exported vector.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from cefr_embedder import EmbedConfig, ExportRecord, export_corpus, load_encoder

cefrkit = pytest.importorskip("cefrkit")

SUBJECTS = ["the cat", "a dog", "the bird", "an old cat", "the small dog"]
VERBS = ["sat", "ran", "flew", "walked"]
PLACES = ["on the mat", "in the garden", "under the tree", "in the park"]
LABELS = ["A1", "A2", "B1", "B2", "C1", "C2", "A2/B1", "B2/C1"]


@contextmanager
def _criterion(name):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[acceptance] secondary {name}: FAIL")
        raise
    print(f"[acceptance] secondary {name}: "
          f"PASS ({time.perf_counter() - start:.2f}s)")


def _sample_records(n=100):
    records = []
    for i in range(n):
        text = (f"{SUBJECTS[i % len(SUBJECTS)]} {VERBS[i % len(VERBS)]} "
                f"{PLACES[i % len(PLACES)]} .")
        labels = tuple(LABELS[i % len(LABELS)].split("/"))
        records.append(ExportRecord(id=f"acc{i:03d}", text=text, labels=labels))
    return records


def _export(encoder_dir, tmp_path, stem):
    cfg = EmbedConfig(encoder=encoder_dir, layer=2, batch_size=16)
    tokenizer, model = load_encoder(cfg)
    out = str(tmp_path / f"{stem}.ndjson")
    debug = str(tmp_path / f"{stem}.states.ndjson")
    export_corpus(_sample_records(), cfg, out, tokenizer=tokenizer,
                  model=model, debug_states_path=debug)
    return out, debug


def test_secondary_acceptance(encoder_dir, tmp_path):
    with _criterion("export validates via the consumer parser"):
        out, debug = _export(encoder_dir, tmp_path, "first")
        data = cefrkit.parse_dataset(out)
        assert len(data) == 100
        data.require_embeddings()
        matrix = data.embedding_matrix()
        assert matrix.shape == (100, 32)
        # tokens came through the schema as well
        assert all(data.tokens_for(s.id) for s in data.sentences)
        two_label = [s for s in data.sentences if len(s.labels) == 2]
        assert two_label, "adjacent two-label records must survive parsing"

    with _criterion("re-export is vector-identical"):
        again, _ = _export(encoder_dir, tmp_path, "second")
        first_docs = [json.loads(l) for l in open(out)]
        second_docs = [json.loads(l) for l in open(again)]
        assert len(first_docs) == len(second_docs) == 100
        for a, b in zip(first_docs, second_docs):
            assert a["id"] == b["id"]
            assert a["vector"] == b["vector"]

    with _criterion("mean_pool of debug states reproduces vectors"):
        states_by_id = {}
        for line in open(debug):
            doc = json.loads(line)
            states_by_id[doc["id"]] = np.asarray(doc["states"], dtype=np.float64)
        assert set(states_by_id) == {s.id for s in data.sentences}
        for sent, vector in zip(data.sentences, matrix):
            pooled = cefrkit.mean_pool(states_by_id[sent.id])
            np.testing.assert_allclose(pooled, vector, rtol=0, atol=1e-5)
