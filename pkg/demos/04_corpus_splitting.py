"""Carve a labeled corpus into density-aware splits and profile it.

The splitter sends the most isolated sentences (highest average cosine
distance to the rest) to the test split first, so evaluation leans on
the hard cases.  Run: python3 demos/04_corpus_splitting.py
"""

import tempfile

import numpy as np

from cefrkit import (
    Dataset,
    EmbeddingRecord,
    LabeledSentence,
    Level,
    SelectionRules,
    SplitQuotas,
    TokenAnnotation,
    Wordlist,
    level_crosstab,
    lexical_profile,
    select_sentences,
    split_corpus,
    write_split,
)

WORDS = {"A1": ["cat", "dog", "run"], "B1": ["argue", "consider", "dog"],
         "C1": ["notwithstanding", "hitherto", "consider"]}


def build_corpus(seed=0, per_level=12, dim=8):
    rng = np.random.default_rng(seed)
    sentences, embeddings, annotations = [], {}, {}
    for level in (Level.A1, Level.B1, Level.C1):
        center = np.zeros(dim)
        center[int(level)] = 2.0
        for i in range(per_level):
            sid = f"{level.name}-{i}"
            words = [WORDS[level.name][rng.integers(3)] for _ in range(5)]
            sentences.append(LabeledSentence(
                id=sid, text=" ".join(words), labels=frozenset({level}),
                paragraph_initial=True, article_first_paragraph=False))
            embeddings[sid] = EmbeddingRecord(
                id=sid, vector=center + 0.5 * rng.normal(size=dim))
            annotations[sid] = tuple(
                TokenAnnotation(surface=w, lemma=w, pos="VERB",
                                ner=None, is_content=True)
                for w in words)
    return Dataset(sentences=tuple(sentences), embeddings=embeddings,
                   annotations=annotations)


def main():
    data = build_corpus()

    quotas = SplitQuotas(test=(3, 0, 3, 0, 3, 0), valid=(2, 0, 2, 0, 2, 0))
    result = split_corpus(data, quotas)
    for name in ("train", "valid", "test"):
        part = getattr(result, name)
        print(f"{name}: {len(part)} sentences")
    with tempfile.TemporaryDirectory() as tmp:
        write_split(result, tmp)
        print(f"wrote ndjson splits plus manifest.json under {tmp}\n")

    # add two candidates the filter should refuse: too short, quoted speech
    extra = [
        LabeledSentence(id="x-short", text="too short", labels=frozenset({Level.A1}),
                        paragraph_initial=True, article_first_paragraph=False),
        LabeledSentence(id="x-quote", text='he said "stop right there" loudly',
                        labels=frozenset({Level.B1}),
                        paragraph_initial=True, article_first_paragraph=False),
    ]
    ann = dict(data.annotations)
    for s in extra:
        ann[s.id] = tuple(
            TokenAnnotation(surface=w, lemma=w, pos="VERB", ner=None,
                            is_content=True)
            for w in s.text.split())
    pool = list(data.sentences) + extra
    rules = SelectionRules(min_words=4, max_words=10)
    picked = select_sentences(pool, ann, rules)
    print(f"selection kept {len(picked.kept)} of {len(pool)}; "
          f"rejections by rule: {dict(picked.rejections)}\n")

    with tempfile.NamedTemporaryFile("w", suffix=".tsv", delete=False) as fh:
        fh.write("cat\tVERB\tA1\nrun\tVERB\tA1\nargue\tVERB\tB1\n"
                 "consider\tVERB\tB2\n")
        wordlist_path = fh.name
    wordlist = Wordlist.from_tsv(wordlist_path)
    print("lexical profile (percent of content words per graded band):")
    for row in lexical_profile(data, wordlist):
        bands = " ".join(f"{lv.name}={pct:.1f}"
                         for lv, pct in sorted(row.percent_by_level.items()))
        print(f"  {row.level.name}: n={row.num_sentences:3d} "
              f"len={row.mean_length:.1f} {bands}")

    external = {s.id: ("elementary" if s.id.startswith("A1") else "advanced")
                for s in data.sentences}
    table = level_crosstab(data, external)
    print("\ncrosstab vs an external grading:")
    print(table.to_tsv())


if __name__ == "__main__":
    main()
