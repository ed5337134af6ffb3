"""Corpus preparation: similarity-aware splitting, sentence selection,
lexical profiling against a graded wordlist, and label cross-tabulation.

Splitting ranks sentences by average cosine distance to all others and fills
per-level test quotas first, then validation, then train, where a sentence's
level is the higher of its gold labels.  Selection applies a fixed rule
order and attributes each rejection to the first failing rule.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .core import (
    Dataset,
    DatasetError,
    LabeledSentence,
    Level,
    NUM_LEVELS,
    TokenAnnotation,
    write_dataset,
)

__all__ = [
    "SplitQuotas",
    "SplitResult",
    "average_cosine_distances",
    "split_corpus",
    "write_split",
    "SelectionRules",
    "SelectionResult",
    "load_allowlist",
    "select_sentences",
    "Wordlist",
    "ProfileRow",
    "lexical_profile",
    "profile_to_tsv",
    "Crosstab",
    "level_crosstab",
]

# entity types that never disqualify a sentence
NUMERIC_ENTITY_TYPES = frozenset(
    {"DATE", "TIME", "PERCENT", "MONEY", "QUANTITY", "ORDINAL", "CARDINAL"}
)

# straight and curly apostrophes are left alone: contractions are not quotes
QUOTE_OR_BRACKET_CHARS = frozenset('"“”‘«»()[]{}')

_DISTANCE_BLOCK = 1024


@dataclass(frozen=True)
class SplitQuotas:
    """Per-level target counts for the test and validation splits."""

    test: tuple[int, ...]
    valid: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.test) != len(self.valid):
            raise ValueError("test and valid quotas must cover the same levels")
        if any(q < 0 for q in self.test) or any(q < 0 for q in self.valid):
            raise ValueError("quotas must be nonnegative")
        object.__setattr__(self, "test", tuple(int(q) for q in self.test))
        object.__setattr__(self, "valid", tuple(int(q) for q in self.valid))

    @property
    def num_levels(self) -> int:
        return len(self.test)


def average_cosine_distances(data: Dataset) -> np.ndarray:
    """Mean cosine distance from each sentence to every other sentence.

    Self-distances are excluded; a single-sentence corpus gets 0.  Row
    blocks keep memory bounded and the reduction order fixed.
    """
    data.require_embeddings()
    matrix = data.embedding_matrix()
    n = matrix.shape[0]
    if n == 1:
        return np.zeros(1)
    normed = matrix / np.linalg.norm(matrix, axis=1, keepdims=True)
    sim_rowsums = np.empty(n)
    for start in range(0, n, _DISTANCE_BLOCK):
        block = normed[start : start + _DISTANCE_BLOCK]
        sim_rowsums[start : start + block.shape[0]] = (block @ normed.T).sum(axis=1)
    # row sum includes the self-similarity, which is exactly 1 for unit rows
    return 1.0 - (sim_rowsums - 1.0) / (n - 1)


@dataclass(frozen=True)
class SplitResult:
    test: Dataset
    valid: Dataset
    train: Dataset
    manifest: dict[str, Any]

    def __iter__(self):
        return iter((self.test, self.valid, self.train))


def split_corpus(data: Dataset, quotas: SplitQuotas) -> SplitResult:
    """Quota-filling walk over sentences sorted by descending average distance.

    Each sentence is binned by its higher gold label.  Walking the sorted
    order, a sentence goes to test while its level's test quota has room,
    else to validation, else to train.  Outputs are disjoint, cover the
    input, and keep the input's sentence order within each split.
    """
    levels = [int(s.higher_label) for s in data.sentences]
    available = np.bincount(levels, minlength=quotas.num_levels)
    for lvl in range(quotas.num_levels):
        need = quotas.test[lvl] + quotas.valid[lvl]
        if need > available[lvl]:
            raise ValueError(
                f"infeasible quotas for level {Level(lvl).label}: "
                f"need {need}, have {int(available[lvl])}"
            )

    distances = average_cosine_distances(data)
    # stable sort so equal distances keep their input order
    order = np.argsort(-distances, kind="stable")

    test_left = list(quotas.test)
    valid_left = list(quotas.valid)
    assignment: dict[str, str] = {}
    for i in order:
        lvl = levels[i]
        sid = data.sentences[i].id
        if test_left[lvl] > 0:
            test_left[lvl] -= 1
            assignment[sid] = "test"
        elif valid_left[lvl] > 0:
            valid_left[lvl] -= 1
            assignment[sid] = "valid"
        else:
            assignment[sid] = "train"

    split_ids = {name: [] for name in ("test", "valid", "train")}
    for sentence in data.sentences:
        split_ids[assignment[sentence.id]].append(sentence.id)

    def level_counts(ids: list[str]) -> dict[str, int]:
        counts = [0] * quotas.num_levels
        for sid in ids:
            counts[int(data.sentence(sid).higher_label)] += 1
        return {Level(j).label: counts[j] for j in range(quotas.num_levels)}

    manifest = {
        "ranking": "descending average cosine distance",
        "split_label_rule": "higher gold label",
        "quotas": {
            "test": {Level(j).label: quotas.test[j] for j in range(quotas.num_levels)},
            "valid": {Level(j).label: quotas.valid[j] for j in range(quotas.num_levels)},
        },
        "counts": {name: level_counts(ids) for name, ids in split_ids.items()},
        "total": len(data.sentences),
    }
    return SplitResult(
        test=data.subset(split_ids["test"]),
        valid=data.subset(split_ids["valid"]),
        train=data.subset(split_ids["train"]),
        manifest=manifest,
    )


def write_split(result: SplitResult, out_dir: str) -> None:
    """Write test/valid/train NDJSON files plus a quota-accounting manifest."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    for name in ("test", "valid", "train"):
        write_dataset(getattr(result, name), os.path.join(out_dir, f"{name}.ndjson"))
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(result.manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_allowlist(path: str | None = None) -> frozenset[str]:
    """Entity surface forms that never disqualify a sentence.

    Reads the packaged default list when no path is given.  One entry per
    line; blank lines and # comments ignored.
    """
    if path is None:
        text = (
            resources.files("cefrkit").joinpath("data/entity_allowlist.txt")
            .read_text(encoding="utf-8")
        )
    else:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    entries = set()
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            entries.add(line)
    return frozenset(entries)


@dataclass(frozen=True)
class SelectionRules:
    """Filter configuration; the defaults implement the standard pipeline."""

    min_words: int = 5
    max_words: int = 30
    require_paragraph_initial: bool = True
    exclude_article_first_paragraph: bool = True
    rejected_chars: frozenset[str] = QUOTE_OR_BRACKET_CHARS
    allowed_entity_types: frozenset[str] = NUMERIC_ENTITY_TYPES
    entity_allowlist: frozenset[str] = frozenset()

    @classmethod
    def default(cls, allowlist_path: str | None = None) -> "SelectionRules":
        return cls(entity_allowlist=load_allowlist(allowlist_path))


# evaluation order is fixed; a rejection counts against the first failing rule
RULE_ORDER = (
    "paragraph_initial",
    "article_first_paragraph",
    "length",
    "quotes_or_brackets",
    "entities",
)


@dataclass(frozen=True)
class SelectionResult:
    kept: tuple[LabeledSentence, ...]
    rejections: dict[str, int]


def _entity_type(tag: str) -> str:
    # tolerate BIO-style prefixes from some annotation pipelines
    if len(tag) > 2 and tag[1] == "-" and tag[0] in "BIES":
        return tag[2:]
    return tag


def _failing_rule(
    sentence: LabeledSentence,
    tokens: tuple[TokenAnnotation, ...] | None,
    rules: SelectionRules,
) -> str | None:
    if rules.require_paragraph_initial:
        if sentence.paragraph_initial is None:
            raise DatasetError(
                f"sentence {sentence.id!r} lacks the paragraph_initial flag"
            )
        if not sentence.paragraph_initial:
            return "paragraph_initial"
    if rules.exclude_article_first_paragraph and sentence.article_first_paragraph:
        return "article_first_paragraph"
    words = len(sentence.text.split())
    if not rules.min_words <= words <= rules.max_words:
        return "length"
    if any(ch in rules.rejected_chars for ch in sentence.text):
        return "quotes_or_brackets"
    if tokens is None:
        raise DatasetError(
            f"sentence {sentence.id!r} has no token annotations; "
            f"the entity rule requires them"
        )
    for tok in tokens:
        if tok.ner is None:
            continue
        kind = _entity_type(tok.ner)
        if kind in rules.allowed_entity_types:
            continue
        if tok.surface in rules.entity_allowlist:
            continue
        return "entities"
    return None


def select_sentences(
    candidates: Sequence[LabeledSentence],
    annotations: Mapping[str, tuple[TokenAnnotation, ...]],
    rules: SelectionRules,
) -> SelectionResult:
    """Apply the selection rules in fixed order; count rejections per rule."""
    kept: list[LabeledSentence] = []
    rejections = {name: 0 for name in RULE_ORDER}
    for sentence in candidates:
        failed = _failing_rule(sentence, annotations.get(sentence.id), rules)
        if failed is None:
            kept.append(sentence)
        else:
            rejections[failed] += 1
    return SelectionResult(kept=tuple(kept), rejections=rejections)


@dataclass(frozen=True)
class Wordlist:
    """Graded vocabulary: (lowercased lemma, POS tag) -> level A1..B2."""

    entries: dict[tuple[str, str], Level]

    def __post_init__(self) -> None:
        for (lemma, pos), level in self.entries.items():
            if level > Level.B2:
                raise ValueError(
                    f"wordlist entry {(lemma, pos)} graded {level.label}; "
                    f"only A1..B2 are valid"
                )

    def lookup(self, lemma: str, pos: str) -> Level | None:
        return self.entries.get((lemma.lower(), pos))

    @classmethod
    def from_tsv(cls, path: str) -> "Wordlist":
        """Load `lemma<TAB>pos<TAB>level` lines; later duplicates rejected."""
        entries: dict[tuple[str, str], Level] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise DatasetError(
                        f"{path}:{line_no}: expected lemma<TAB>pos<TAB>level"
                    )
                lemma, pos, level_txt = (p.strip() for p in parts)
                key = (lemma.lower(), pos)
                if key in entries:
                    raise DatasetError(f"{path}:{line_no}: duplicate entry {key}")
                entries[key] = Level.from_label(level_txt)
        return cls(entries)


@dataclass(frozen=True)
class ProfileRow:
    level: Level
    num_sentences: int
    mean_length: float
    content_words: int
    percent_by_level: dict[Level, float] = field(default_factory=dict)


def lexical_profile(data: Dataset, wordlist: Wordlist) -> list[ProfileRow]:
    """Per sentence-level: mean word count and % of content words graded A1..B2.

    Two-label sentences contribute once to each of their levels.  Content
    words missing from the wordlist stay in the denominator, so the four
    percentages need not sum to 100.
    """
    lengths: list[list[int]] = [[] for _ in range(NUM_LEVELS)]
    content_totals = [0] * NUM_LEVELS
    graded = [[0] * 4 for _ in range(NUM_LEVELS)]

    for sentence in data.sentences:
        tokens = data.annotations.get(sentence.id)
        if tokens is None:
            raise DatasetError(
                f"sentence {sentence.id!r} has no token annotations"
            )
        words = len(sentence.text.split())
        content = [tok for tok in tokens if tok.is_content]
        hits = [0] * 4
        for tok in content:
            grade = wordlist.lookup(tok.lemma, tok.pos)
            if grade is not None:
                hits[int(grade)] += 1
        for level in sentence.labels:
            j = int(level)
            lengths[j].append(words)
            content_totals[j] += len(content)
            for g in range(4):
                graded[j][g] += hits[g]

    rows = []
    for j in range(NUM_LEVELS):
        total = content_totals[j]
        percents = {
            Level(g): (100.0 * graded[j][g] / total if total else 0.0)
            for g in range(4)
        }
        rows.append(
            ProfileRow(
                level=Level(j),
                num_sentences=len(lengths[j]),
                mean_length=float(np.mean(lengths[j])) if lengths[j] else 0.0,
                content_words=total,
                percent_by_level=percents,
            )
        )
    return rows


def profile_to_tsv(rows: Iterable[ProfileRow]) -> str:
    header = "level\tsentences\tmean_length\tcontent_words\tA1%\tA2%\tB1%\tB2%"
    lines = [header]
    for row in rows:
        percents = "\t".join(
            f"{row.percent_by_level[Level(g)]:.1f}" for g in range(4)
        )
        lines.append(
            f"{row.level.label}\t{row.num_sentences}\t{row.mean_length:.1f}"
            f"\t{row.content_words}\t{percents}"
        )
    return "\n".join(lines) + "\n"


def _column_sort_key(label: str) -> tuple[int, float | str]:
    try:
        return (0, float(label))
    except ValueError:
        return (1, label)


@dataclass(frozen=True)
class Crosstab:
    """Gold levels (rows) against an external labeling (columns)."""

    columns: tuple[str, ...]
    matrix: np.ndarray

    def to_tsv(self) -> str:
        lines = ["level\t" + "\t".join(self.columns)]
        for j in range(self.matrix.shape[0]):
            cells = "\t".join(str(int(c)) for c in self.matrix[j])
            lines.append(f"{Level(j).label}\t{cells}")
        return "\n".join(lines) + "\n"


def level_crosstab(
    data: Dataset, external_levels: Mapping[str, str]
) -> Crosstab:
    """Count (gold level, external label) pairs over the shared id set.

    Two-label sentences count once per gold label.  Columns are sorted
    numerically when every label parses as a number, mixed labels sort
    numbers first.
    """
    shared = [s for s in data.sentences if s.id in external_levels]
    if not shared:
        raise ValueError("no sentence ids shared with the external labeling")
    columns = sorted(
        {external_levels[s.id] for s in shared}, key=_column_sort_key
    )
    col_index = {label: i for i, label in enumerate(columns)}
    matrix = np.zeros((NUM_LEVELS, len(columns)), dtype=np.int64)
    for sentence in shared:
        col = col_index[external_levels[sentence.id]]
        for level in sentence.labels:
            matrix[int(level), col] += 1
    return Crosstab(columns=tuple(columns), matrix=matrix)
