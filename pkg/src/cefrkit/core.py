"""Domain types, dataset parsing, annotation reconciliation, and vector utilities.

The dataset wire format is NDJSON (UTF-8, one JSON object per line):

    {"id": str, "text": str, "labels": [str], "vector": [float],
     "tokens": [{"surface": str, "lemma": str, "pos": str,
                 "ner": str|null, "is_content": bool}], ...}

"vector" and "tokens" are optional ("vector" may be omitted in corpus-tools-only
workflows).  Optional extras: "source", "paragraph_initial",
"article_first_paragraph".  Unknown keys are ignored.  Floats are serialized
with full round-trip precision.
"""
from __future__ import annotations

import enum
import io
import json
import os
from dataclasses import dataclass
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

__all__ = [
    "Level",
    "Source",
    "TokenAnnotation",
    "LabeledSentence",
    "EmbeddingRecord",
    "Dataset",
    "DatasetError",
    "FUNCTION_WORD_POS",
    "parse_dataset",
    "serialize_dataset",
    "write_dataset",
    "reconcile_annotations",
    "mean_pool",
    "cosine_similarity",
]

# Norms at or below this are treated as zero vectors and rejected at ingestion.
ZERO_NORM_THRESHOLD = 1e-12

# Universal POS tags for function words: determiners, adpositions,
# conjunctions, particles, pronouns, auxiliaries, punctuation.
FUNCTION_WORD_POS = frozenset(
    {"DET", "ADP", "CCONJ", "SCONJ", "CONJ", "PART", "PRON", "AUX", "PUNCT"}
)


class DatasetError(ValueError):
    """Raised on malformed or invariant-violating dataset input."""


class Level(enum.IntEnum):
    """CEFR proficiency level, ordered A1 (easiest) through C2 (hardest)."""

    A1 = 0
    A2 = 1
    B1 = 2
    B2 = 3
    C1 = 4
    C2 = 5

    @property
    def label(self) -> str:
        return self.name

    @classmethod
    def from_label(cls, label: str) -> "Level":
        try:
            return cls[label]
        except KeyError:
            raise ValueError(
                f"unknown level label {label!r}; expected one of "
                f"{', '.join(l.name for l in cls)}"
            ) from None


NUM_LEVELS = len(Level)


class Source(enum.Enum):
    """Provenance of a sentence."""

    NEWSELA_AUTO = "newsela-auto"
    WIKI_AUTO = "wiki-auto"
    SCORE = "score"
    OTHER = "other"

    @classmethod
    def from_string(cls, value: str) -> "Source":
        for member in cls:
            if member.value == value:
                return member
        raise ValueError(f"unknown source {value!r}")


@dataclass(frozen=True)
class TokenAnnotation:
    """Per-token annotation carried in the embedding sidecar."""

    surface: str
    lemma: str
    pos: str
    ner: str | None = None
    is_content: bool = False

    def __post_init__(self) -> None:
        if self.is_content and self.pos in FUNCTION_WORD_POS:
            raise ValueError(
                f"token {self.surface!r}: is_content must be false for "
                f"function-word POS {self.pos!r}"
            )

    def to_json(self) -> dict[str, Any]:
        return {
            "surface": self.surface,
            "lemma": self.lemma,
            "pos": self.pos,
            "ner": self.ner,
            "is_content": self.is_content,
        }


@dataclass(frozen=True)
class LabeledSentence:
    """A sentence with one or two adjacent gold CEFR levels.

    Two labels are kept when two annotators disagreed by exactly one grade;
    both are regarded as correct.
    """

    id: str
    text: str
    labels: frozenset[Level]
    source: Source = Source.OTHER
    paragraph_initial: bool | None = None
    article_first_paragraph: bool | None = None

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError(f"sentence {self.id!r}: text is empty")
        n = len(self.labels)
        if n < 1 or n > 2:
            raise ValueError(f"sentence {self.id!r}: need 1 or 2 labels, got {n}")
        if n == 2:
            lo, hi = sorted(self.labels)
            if hi - lo != 1:
                raise ValueError(
                    f"sentence {self.id!r}: labels {lo.name} and {hi.name} "
                    f"differ by {hi - lo} grades (only adjacent pairs allowed)"
                )

    @property
    def higher_label(self) -> Level:
        return max(self.labels)


@dataclass(frozen=True)
class EmbeddingRecord:
    """A fixed-dimension sentence embedding plus optional token annotations."""

    id: str
    vector: np.ndarray
    tokens: tuple[TokenAnnotation, ...] | None = None

    def __post_init__(self) -> None:
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1:
            raise ValueError(f"record {self.id!r}: vector must be 1-D")
        if not np.all(np.isfinite(vec)):
            raise ValueError(f"record {self.id!r}: vector has non-finite entries")
        if float(np.linalg.norm(vec)) <= ZERO_NORM_THRESHOLD:
            raise ValueError(f"record {self.id!r}: zero-norm vector rejected")
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


class Dataset:
    """Parsed corpus: sentences, their embeddings, and token annotations.

    Embeddings present in one dataset all share the same dimension.  Token
    annotations may also exist for sentences without a vector (corpus-tools
    workflows), so they are tracked per id alongside the embedding map.
    """

    def __init__(
        self,
        sentences: Iterable[LabeledSentence],
        embeddings: Mapping[str, EmbeddingRecord] | None = None,
        annotations: Mapping[str, tuple[TokenAnnotation, ...]] | None = None,
    ) -> None:
        self.sentences: list[LabeledSentence] = list(sentences)
        self.embeddings: dict[str, EmbeddingRecord] = dict(embeddings or {})
        self.annotations: dict[str, tuple[TokenAnnotation, ...]] = dict(
            annotations or {}
        )
        self._by_id = {s.id: s for s in self.sentences}
        if len(self._by_id) != len(self.sentences):
            raise DatasetError("duplicate sentence ids")
        dims = {rec.dim for rec in self.embeddings.values()}
        if len(dims) > 1:
            raise DatasetError(f"mixed embedding dimensions: {sorted(dims)}")
        self._dim = dims.pop() if dims else None

    @property
    def dim(self) -> int | None:
        return self._dim

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self) -> Iterator[LabeledSentence]:
        return iter(self.sentences)

    def sentence(self, sid: str) -> LabeledSentence:
        return self._by_id[sid]

    def tokens_for(self, sid: str) -> tuple[TokenAnnotation, ...] | None:
        return self.annotations.get(sid)

    def require_embeddings(self) -> None:
        missing = [s.id for s in self.sentences if s.id not in self.embeddings]
        if missing:
            raise DatasetError(
                f"{len(missing)} sentence(s) lack embeddings "
                f"(first: {missing[0]!r})"
            )

    def embedding_matrix(self) -> np.ndarray:
        """Row-per-sentence embedding matrix in sentence order."""
        self.require_embeddings()
        return np.stack([self.embeddings[s.id].vector for s in self.sentences])

    def level_counts(self, num_levels: int = NUM_LEVELS) -> np.ndarray:
        """Label counts per level; a two-label sentence counts toward both."""
        counts = np.zeros(num_levels, dtype=np.int64)
        for sent in self.sentences:
            for lvl in sent.labels:
                if lvl >= num_levels:
                    raise DatasetError(
                        f"sentence {sent.id!r} has level {lvl.name} outside "
                        f"the first {num_levels} levels"
                    )
                counts[lvl] += 1
        return counts

    def subset(self, ids: Iterable[str]) -> "Dataset":
        """New dataset restricted to `ids`, preserving original order."""
        wanted = set(ids)
        sentences = [s for s in self.sentences if s.id in wanted]
        return Dataset(
            sentences,
            {s.id: self.embeddings[s.id] for s in sentences if s.id in self.embeddings},
            {s.id: self.annotations[s.id] for s in sentences if s.id in self.annotations},
        )


def reconcile_annotations(a: Level, b: Level) -> frozenset[Level] | None:
    """Merge two annotators' levels.

    Equal levels collapse to one; levels one grade apart are both kept as
    correct; anything further apart returns None (sentence excluded).
    """
    if a == b:
        return frozenset({a})
    if abs(int(a) - int(b)) == 1:
        return frozenset({a, b})
    return None


def mean_pool(token_vectors: np.ndarray) -> np.ndarray:
    """Column-wise mean of an m x d matrix of token vectors (m >= 1)."""
    mat = np.asarray(token_vectors, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat.reshape(1, -1)
    if mat.ndim != 2 or mat.shape[0] == 0:
        raise ValueError("mean_pool needs at least one row")
    return mat.mean(axis=0)


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu <= ZERO_NORM_THRESHOLD or nv <= ZERO_NORM_THRESHOLD:
        raise ValueError("cosine similarity undefined for zero-norm vectors")
    return float(np.dot(u, v) / (nu * nv))


def _parse_labels(raw: Any, line_no: int) -> frozenset[Level]:
    if not isinstance(raw, list) or not raw:
        raise DatasetError(f"line {line_no}: 'labels' must be a non-empty list")
    levels = set()
    for item in raw:
        if not isinstance(item, str):
            raise DatasetError(f"line {line_no}: label {item!r} is not a string")
        try:
            levels.add(Level.from_label(item))
        except ValueError as exc:
            raise DatasetError(f"line {line_no}: {exc}") from None
    return frozenset(levels)


def _parse_tokens(raw: Any, line_no: int) -> tuple[TokenAnnotation, ...]:
    if not isinstance(raw, list):
        raise DatasetError(f"line {line_no}: 'tokens' must be a list")
    tokens = []
    for tok in raw:
        if not isinstance(tok, dict):
            raise DatasetError(f"line {line_no}: token entries must be objects")
        try:
            tokens.append(
                TokenAnnotation(
                    surface=str(tok["surface"]),
                    lemma=str(tok["lemma"]),
                    pos=str(tok["pos"]),
                    ner=tok.get("ner"),
                    is_content=bool(tok["is_content"]),
                )
            )
        except KeyError as exc:
            raise DatasetError(f"line {line_no}: token missing key {exc}") from None
        except ValueError as exc:
            raise DatasetError(f"line {line_no}: {exc}") from None
    return tuple(tokens)


def parse_dataset(
    source: str | os.PathLike | io.TextIOBase | Iterable[str],
    exclude_ids: Iterable[str] | None = None,
) -> Dataset:
    """Parse and validate an NDJSON dataset.

    `source` may be a path, an open text stream, or an iterable of lines.
    `exclude_ids` drops the given ids before validation of cross-record
    invariants (e.g. sentences held out for annotator trials).
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_dataset(fh, exclude_ids=exclude_ids)

    excluded = set(exclude_ids or ())
    sentences: list[LabeledSentence] = []
    embeddings: dict[str, EmbeddingRecord] = {}
    annotations: dict[str, tuple[TokenAnnotation, ...]] = {}
    seen: set[str] = set()
    dim: int | None = None

    for line_no, line in enumerate(source, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {line_no}: malformed JSON ({exc.msg})") from None
        if not isinstance(obj, dict):
            raise DatasetError(f"line {line_no}: expected a JSON object")

        sid = obj.get("id")
        if not isinstance(sid, str) or not sid:
            raise DatasetError(f"line {line_no}: 'id' must be a non-empty string")
        if sid in excluded:
            continue
        if sid in seen:
            raise DatasetError(f"line {line_no}: duplicate id {sid!r}")
        seen.add(sid)

        text = obj.get("text")
        if not isinstance(text, str) or not text:
            raise DatasetError(f"line {line_no}: 'text' must be a non-empty string")

        labels = _parse_labels(obj.get("labels"), line_no)
        source_raw = obj.get("source", "other")
        try:
            src = Source.from_string(source_raw)
        except ValueError as exc:
            raise DatasetError(f"line {line_no}: {exc}") from None

        try:
            sentences.append(
                LabeledSentence(
                    id=sid,
                    text=text,
                    labels=labels,
                    source=src,
                    paragraph_initial=obj.get("paragraph_initial"),
                    article_first_paragraph=obj.get("article_first_paragraph"),
                )
            )
        except ValueError as exc:
            raise DatasetError(f"line {line_no}: {exc}") from None

        tokens: tuple[TokenAnnotation, ...] | None = None
        if "tokens" in obj and obj["tokens"] is not None:
            tokens = _parse_tokens(obj["tokens"], line_no)
            annotations[sid] = tokens

        if "vector" in obj and obj["vector"] is not None:
            raw_vec = obj["vector"]
            if not isinstance(raw_vec, list) or not raw_vec:
                raise DatasetError(
                    f"line {line_no}: 'vector' must be a non-empty list"
                )
            try:
                rec = EmbeddingRecord(id=sid, vector=np.array(raw_vec), tokens=tokens)
            except (ValueError, TypeError) as exc:
                raise DatasetError(f"line {line_no}: {exc}") from None
            if dim is None:
                dim = rec.dim
            elif rec.dim != dim:
                raise DatasetError(
                    f"line {line_no}: vector dimension {rec.dim} != {dim} "
                    f"seen earlier"
                )
            embeddings[sid] = rec

    return Dataset(sentences, embeddings, annotations)


def _sentence_to_json(data: Dataset, sent: LabeledSentence) -> dict[str, Any]:
    obj: dict[str, Any] = {
        "id": sent.id,
        "text": sent.text,
        "labels": [lvl.name for lvl in sorted(sent.labels)],
    }
    if sent.source is not Source.OTHER:
        obj["source"] = sent.source.value
    if sent.paragraph_initial is not None:
        obj["paragraph_initial"] = sent.paragraph_initial
    if sent.article_first_paragraph is not None:
        obj["article_first_paragraph"] = sent.article_first_paragraph
    rec = data.embeddings.get(sent.id)
    if rec is not None:
        obj["vector"] = [float(x) for x in rec.vector]
    tokens = data.tokens_for(sent.id)
    if tokens is not None:
        obj["tokens"] = [tok.to_json() for tok in tokens]
    return obj


def serialize_dataset(data: Dataset) -> Iterator[str]:
    """Yield NDJSON lines; parse_dataset(serialize_dataset(d)) == d."""
    for sent in data.sentences:
        yield json.dumps(_sentence_to_json(data, sent), ensure_ascii=False)


def write_dataset(data: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in serialize_dataset(data):
            fh.write(line + "\n")
