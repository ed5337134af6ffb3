"""Corpus splitting, sentence selection, lexical profiling, cross-tabulation."""

import json

import numpy as np
import pytest

from cefrkit import (
    Dataset,
    DatasetError,
    EmbeddingRecord,
    LabeledSentence,
    Level,
    SelectionRules,
    SplitQuotas,
    Wordlist,
    average_cosine_distances,
    level_crosstab,
    lexical_profile,
    select_sentences,
    split_corpus,
)
from cefrkit.corpus_tools import (
    RULE_ORDER,
    load_allowlist,
    profile_to_tsv,
    write_split,
)
from cefrkit.core import TokenAnnotation


def _embedded_dataset(vectors, labels, **sentence_extra):
    sentences, embeddings = [], {}
    for i, (vec, label) in enumerate(zip(vectors, labels)):
        sid = f"s{i}"
        labelset = label if isinstance(label, (set, frozenset)) else {label}
        sentences.append(
            LabeledSentence(
                id=sid, text="one two three four five six",
                labels=frozenset(Level(l) for l in labelset), **sentence_extra
            )
        )
        embeddings[sid] = EmbeddingRecord(id=sid, vector=np.asarray(vec, float))
    return Dataset(sentences=sentences, embeddings=embeddings)


# -------------------------------------------------------------- distances

def test_average_distance_hand_case():
    # two identical unit vectors plus one orthogonal vector
    data = _embedded_dataset(
        [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [0, 0, 0]
    )
    d = average_cosine_distances(data)
    assert d == pytest.approx([0.5, 0.5, 1.0], abs=1e-12)


def test_average_distance_single_sentence():
    data = _embedded_dataset([[1.0, 2.0]], [0])
    assert average_cosine_distances(data).tolist() == [0.0]


def test_average_distance_matches_quadratic_oracle():
    rng = np.random.default_rng(0)
    vectors = rng.normal(size=(17, 5))
    data = _embedded_dataset(vectors, rng.integers(0, 6, size=17).tolist())
    got = average_cosine_distances(data)
    for i in range(17):
        total = 0.0
        for j in range(17):
            if i == j:
                continue
            sim = float(np.dot(vectors[i], vectors[j])) / (
                np.linalg.norm(vectors[i]) * np.linalg.norm(vectors[j])
            )
            total += 1.0 - sim
        assert got[i] == pytest.approx(total / 16, abs=1e-10)


# ------------------------------------------------------------------ split

def test_split_outlier_lands_in_test():
    # three clustered points and one far outlier; test quota 1 for its level
    data = _embedded_dataset(
        [[1.0, 0.0], [0.99, 0.01], [0.98, 0.02], [-1.0, 0.5]],
        [1, 1, 1, 1],
    )
    quotas = SplitQuotas(test=(0, 1, 0, 0, 0, 0), valid=(0, 0, 0, 0, 0, 0))
    result = split_corpus(data, quotas)
    assert [s.id for s in result.test.sentences] == ["s3"]


def test_split_zero_quotas_everything_trains():
    data = _embedded_dataset(np.eye(4), [0, 1, 2, 3])
    zeros = (0,) * 6
    test, valid, train = split_corpus(data, SplitQuotas(test=zeros, valid=zeros))
    assert len(test) == 0 and len(valid) == 0
    assert [s.id for s in train.sentences] == ["s0", "s1", "s2", "s3"]


def test_split_fills_test_before_valid():
    # the two most distant points take the single test slot in rank order
    data = _embedded_dataset(
        [[1.0, 0.0], [0.9, 0.1], [-1.0, 0.1], [-0.9, -0.2]],
        [2, 2, 2, 2],
    )
    quotas = SplitQuotas(test=(0, 0, 1, 0, 0, 0), valid=(0, 0, 1, 0, 0, 0))
    result = split_corpus(data, quotas)
    d = average_cosine_distances(data)
    order = np.argsort(-d, kind="stable")
    assert [s.id for s in result.test.sentences] == [f"s{order[0]}"]
    assert [s.id for s in result.valid.sentences] == [f"s{order[1]}"]


def test_split_partition_and_quota_invariants():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(6, 40))
        labels = [int(g) for g in rng.integers(0, 6, size=n)]
        data = _embedded_dataset(rng.normal(size=(n, 4)), labels)
        counts = [labels.count(j) for j in range(6)]
        q_test = [int(rng.integers(0, c + 1)) for c in counts]
        q_valid = [int(rng.integers(0, c - t + 1)) for c, t in zip(counts, q_test)]
        result = split_corpus(data, SplitQuotas(tuple(q_test), tuple(q_valid)))
        ids = [
            {s.id for s in part.sentences}
            for part in (result.test, result.valid, result.train)
        ]
        assert ids[0] | ids[1] | ids[2] == {s.id for s in data.sentences}
        assert sum(len(x) for x in ids) == n
        for part, want in ((result.test, q_test), (result.valid, q_valid)):
            have = [0] * 6
            for s in part.sentences:
                have[int(s.higher_label)] += 1
            assert have == want


def test_split_two_label_sentence_uses_higher_level():
    data = Dataset(
        sentences=[
            LabeledSentence(id="pair", text="x",
                            labels=frozenset({Level.B1, Level.B2})),
            LabeledSentence(id="solo", text="x", labels=frozenset({Level.B2})),
        ],
        embeddings={
            "pair": EmbeddingRecord(id="pair", vector=np.array([1.0, 0.0])),
            "solo": EmbeddingRecord(id="solo", vector=np.array([0.0, 1.0])),
        },
    )
    quotas = SplitQuotas(test=(0, 0, 0, 2, 0, 0), valid=(0,) * 6)
    result = split_corpus(data, quotas)
    assert {s.id for s in result.test.sentences} == {"pair", "solo"}


def test_split_infeasible_quota_errors():
    data = _embedded_dataset(np.eye(3), [0, 0, 1])
    with pytest.raises(ValueError, match="quota"):
        split_corpus(data, SplitQuotas(test=(3, 0, 0, 0, 0, 0), valid=(0,) * 6))


def test_split_manifest_accounting():
    data = _embedded_dataset(np.eye(5), [0, 0, 1, 1, 2])
    quotas = SplitQuotas(test=(1, 0, 0, 0, 0, 0), valid=(0, 1, 0, 0, 0, 0))
    result = split_corpus(data, quotas)
    manifest = result.manifest
    assert manifest["total"] == 5
    assert manifest["counts"]["test"]["A1"] == 1
    assert manifest["counts"]["valid"]["A2"] == 1


def test_write_split_round_trip(tmp_path):
    from cefrkit import parse_dataset

    data = _embedded_dataset(np.eye(4), [0, 1, 2, 3])
    quotas = SplitQuotas(test=(1, 0, 0, 0, 0, 0), valid=(0, 1, 0, 0, 0, 0))
    result = split_corpus(data, quotas)
    write_split(result, str(tmp_path))
    for name in ("test", "valid", "train"):
        part = parse_dataset(str(tmp_path / f"{name}.ndjson"))
        assert len(part) == len(getattr(result, name))
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["total"] == 4


# -------------------------------------------------------------- selection

def _candidate(sid, text, paragraph_initial=True, first_para=False, ner=None):
    sent = LabeledSentence(
        id=sid, text=text, labels=frozenset({Level.B1}),
        paragraph_initial=paragraph_initial,
        article_first_paragraph=first_para,
    )
    words = text.replace('"', "").split()
    tokens = tuple(
        TokenAnnotation(surface=w, lemma=w.lower(), pos="NOUN",
                        ner=(ner if i == 0 else None))
        for i, w in enumerate(words)
    )
    return sent, {sid: tokens}


def _rules(**kw):
    base = SelectionRules(entity_allowlist=frozenset({"Paris"}))
    if kw:
        from dataclasses import replace
        base = replace(base, **kw)
    return base


def test_selection_keeps_clean_sentence():
    sent, ann = _candidate("ok", "alpha beta gamma delta epsilon zeta eta theta iota kappa")
    result = select_sentences([sent], ann, _rules())
    assert [s.id for s in result.kept] == ["ok"]
    assert sum(result.rejections.values()) == 0


def test_selection_rejects_short_sentence():
    sent, ann = _candidate("short", "one two three four")
    result = select_sentences([sent], ann, _rules())
    assert result.kept == ()
    assert result.rejections["length"] == 1


def test_selection_rejects_long_sentence():
    sent, ann = _candidate("long", " ".join(["word"] * 31))
    result = select_sentences([sent], ann, _rules())
    assert result.rejections["length"] == 1


def test_selection_rejects_non_paragraph_initial():
    sent, ann = _candidate("mid", "alpha beta gamma delta epsilon",
                           paragraph_initial=False)
    result = select_sentences([sent], ann, _rules())
    assert result.rejections["paragraph_initial"] == 1


def test_selection_rejects_article_first_paragraph():
    sent, ann = _candidate("lead", "alpha beta gamma delta epsilon",
                           first_para=True)
    result = select_sentences([sent], ann, _rules())
    assert result.rejections["article_first_paragraph"] == 1


def test_selection_rejects_quotes_and_brackets_not_apostrophes():
    quoted, ann1 = _candidate("q", 'alpha "beta" gamma delta epsilon')
    bracket, ann2 = _candidate("b", "alpha (beta) gamma delta epsilon")
    apos, ann3 = _candidate("a", "alpha's beta gamma delta epsilon")
    result = select_sentences(
        [quoted, bracket, apos], {**ann1, **ann2, **ann3}, _rules()
    )
    assert [s.id for s in result.kept] == ["a"]
    assert result.rejections["quotes_or_brackets"] == 2


def test_selection_entity_rules():
    person, ann1 = _candidate("p", "Smith beta gamma delta epsilon", ner="PERSON")
    listed, ann2 = _candidate("l", "Paris beta gamma delta epsilon", ner="GPE")
    dated, ann3 = _candidate("d", "Monday beta gamma delta epsilon", ner="DATE")
    bio, ann4 = _candidate("bio", "Tuesday beta gamma delta epsilon", ner="B-DATE")
    result = select_sentences(
        [person, listed, dated, bio], {**ann1, **ann2, **ann3, **ann4}, _rules()
    )
    assert [s.id for s in result.kept] == ["l", "d", "bio"]
    assert result.rejections["entities"] == 1


def test_selection_first_failing_rule_wins():
    # fails both length and quotes; only the earlier rule counts it
    sent, ann = _candidate("both", 'one "two" three')
    result = select_sentences([sent], ann, _rules())
    assert result.rejections["length"] == 1
    assert result.rejections["quotes_or_brackets"] == 0
    assert list(result.rejections) == list(RULE_ORDER)


def test_selection_monotone_under_rule_relaxation():
    cands, anns = [], {}
    texts = [
        "one two three four",
        "alpha beta gamma delta epsilon",
        'alpha "beta" gamma delta epsilon',
        " ".join(["w"] * 12),
    ]
    for i, text in enumerate(texts):
        sent, ann = _candidate(f"c{i}", text, paragraph_initial=bool(i % 2) or i == 0)
        cands.append(sent)
        anns.update(ann)
    strict = select_sentences(cands, anns, _rules())
    relaxed = select_sentences(cands, anns, _rules(min_words=1, max_words=99))
    assert {s.id for s in strict.kept} <= {s.id for s in relaxed.kept}


def test_selection_missing_flags_or_tokens_error():
    sent = LabeledSentence(id="x", text="alpha beta gamma delta epsilon",
                           labels=frozenset({Level.A2}))
    with pytest.raises(DatasetError, match="paragraph_initial"):
        select_sentences([sent], {}, _rules())
    flagged, _ = _candidate("y", "alpha beta gamma delta epsilon")
    with pytest.raises(DatasetError, match="token annotations"):
        select_sentences([flagged], {}, _rules())


def test_packaged_allowlist_loads():
    allow = load_allowlist()
    assert "Paris" in allow
    assert "Europe" in allow


# --------------------------------------------------------------- wordlist

def test_wordlist_from_tsv(tmp_path):
    path = tmp_path / "wl.tsv"
    path.write_text(
        "# graded vocabulary\n"
        "cat\tNOUN\tA1\n"
        "Analyse\tVERB\tB2\n"
        "\n",
        encoding="utf-8",
    )
    wl = Wordlist.from_tsv(str(path))
    assert wl.lookup("cat", "NOUN") == Level.A1
    assert wl.lookup("CAT", "NOUN") == Level.A1  # lookup lowercases
    assert wl.lookup("analyse", "VERB") == Level.B2  # keys stored lowercased
    assert wl.lookup("cat", "VERB") is None


def test_wordlist_rejects_duplicates_and_high_grades(tmp_path):
    dup = tmp_path / "dup.tsv"
    dup.write_text("cat\tNOUN\tA1\ncat\tNOUN\tA2\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="duplicate"):
        Wordlist.from_tsv(str(dup))
    high = tmp_path / "high.tsv"
    high.write_text("arcane\tADJ\tC1\n", encoding="utf-8")
    with pytest.raises(ValueError, match="only A1..B2"):
        Wordlist.from_tsv(str(high))


def test_wordlist_malformed_line(tmp_path):
    bad = tmp_path / "bad.tsv"
    bad.write_text("cat NOUN A1\n", encoding="utf-8")
    with pytest.raises(DatasetError, match="lemma<TAB>pos<TAB>level"):
        Wordlist.from_tsv(str(bad))


# ---------------------------------------------------------------- profile

def _profiled_dataset():
    wl = Wordlist({
        ("cat", "NOUN"): Level.A1,
        ("run", "VERB"): Level.A1,
        ("ponder", "VERB"): Level.B2,
    })
    sentences = [
        LabeledSentence(id="s1", text="the cat can run fast",
                        labels=frozenset({Level.A1})),
        LabeledSentence(id="s2", text="they ponder the theorem",
                        labels=frozenset({Level.B1, Level.B2})),
    ]
    annotations = {
        "s1": (
            TokenAnnotation(surface="the", lemma="the", pos="DET"),
            TokenAnnotation(surface="cat", lemma="cat", pos="NOUN", is_content=True),
            TokenAnnotation(surface="can", lemma="can", pos="AUX"),
            TokenAnnotation(surface="run", lemma="run", pos="VERB", is_content=True),
            TokenAnnotation(surface="fast", lemma="fast", pos="ADV", is_content=True),
        ),
        "s2": (
            TokenAnnotation(surface="they", lemma="they", pos="PRON"),
            TokenAnnotation(surface="ponder", lemma="ponder", pos="VERB",
                            is_content=True),
            TokenAnnotation(surface="the", lemma="the", pos="DET"),
            TokenAnnotation(surface="theorem", lemma="theorem", pos="NOUN",
                            is_content=True),
        ),
    }
    return Dataset(sentences=sentences, annotations=annotations), wl


def test_profile_counts_and_percentages():
    data, wl = _profiled_dataset()
    rows = lexical_profile(data, wl)
    a1 = rows[0]
    # 3 content words, 2 graded A1, "fast" unlisted stays in the denominator
    assert a1.num_sentences == 1
    assert a1.mean_length == 5.0
    assert a1.content_words == 3
    assert a1.percent_by_level[Level.A1] == pytest.approx(200.0 / 3.0)
    assert a1.percent_by_level[Level.B2] == 0.0
    # the two-label sentence appears in both the B1 and the B2 rows
    for j in (2, 3):
        assert rows[j].num_sentences == 1
        assert rows[j].content_words == 2
        assert rows[j].percent_by_level[Level.B2] == pytest.approx(50.0)


def test_profile_percent_sums_bounded():
    data, wl = _profiled_dataset()
    for row in lexical_profile(data, wl):
        total = sum(row.percent_by_level.values())
        assert 0.0 <= total <= 100.0 + 1e-9


def test_profile_requires_annotations():
    data = Dataset(
        sentences=[LabeledSentence(id="s", text="x", labels=frozenset({Level.A1}))]
    )
    with pytest.raises(DatasetError, match="token annotations"):
        lexical_profile(data, Wordlist({}))


def test_profile_tsv_layout():
    data, wl = _profiled_dataset()
    text = profile_to_tsv(lexical_profile(data, wl))
    lines = text.strip().split("\n")
    assert lines[0].startswith("level\tsentences\tmean_length")
    assert len(lines) == 7  # header + six levels
    assert lines[1].startswith("A1\t1\t5.0")


# --------------------------------------------------------------- crosstab

def _crosstab_dataset():
    sentences = [
        LabeledSentence(id="a", text="x", labels=frozenset({Level.A1})),
        LabeledSentence(id="b", text="x", labels=frozenset({Level.A1})),
        LabeledSentence(id="c", text="x", labels=frozenset({Level.B1, Level.B2})),
    ]
    return Dataset(sentences=sentences)


def test_crosstab_hand_counts():
    data = _crosstab_dataset()
    tab = level_crosstab(data, {"a": "2", "b": "3", "c": "3"})
    assert tab.columns == ("2", "3")
    assert tab.matrix[0].tolist() == [1, 1]  # A1 split between grades 2 and 3
    assert tab.matrix[2].tolist() == [0, 1]  # two-label counted once per level
    assert tab.matrix[3].tolist() == [0, 1]


def test_crosstab_numeric_column_sort():
    data = _crosstab_dataset()
    tab = level_crosstab(data, {"a": "10", "b": "2", "c": "ungraded"})
    assert tab.columns == ("2", "10", "ungraded")


def test_crosstab_diagonal_for_identical_labelings():
    sentences = [
        LabeledSentence(id=f"s{j}", text="x", labels=frozenset({Level(j)}))
        for j in range(6)
    ]
    data = Dataset(sentences=sentences)
    tab = level_crosstab(data, {f"s{j}": Level(j).label for j in range(6)})
    assert tab.columns == ("A1", "A2", "B1", "B2", "C1", "C2")
    assert np.array_equal(tab.matrix, np.eye(6, dtype=np.int64))


def test_crosstab_empty_intersection_errors():
    with pytest.raises(ValueError, match="shared"):
        level_crosstab(_crosstab_dataset(), {"zz": "1"})


def test_crosstab_tsv():
    tab = level_crosstab(_crosstab_dataset(), {"a": "2", "b": "3", "c": "3"})
    lines = tab.to_tsv().strip().split("\n")
    assert lines[0] == "level\t2\t3"
    assert lines[1] == "A1\t1\t1"
