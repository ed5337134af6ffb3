"""Lightweight rule-based token annotation.

One documented tokenizer policy: a token is either a maximal run of
word characters (letters, digits, underscore) possibly joined by
internal apostrophes or hyphens, or a single non-space punctuation
character.  Every downstream consumer of token counts relies on this
exact rule, so it must not change silently.

The tagger is a coarse heuristic: closed-class lexicons for function
words, a handful of suffix rules, defaults to NOUN.  Entity tagging
covers dates and bare numbers only.  It exists so exports are useful
out of the box; swap in a full pipeline for production annotation by
writing the same record shape.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

__all__ = [
    "FUNCTION_WORD_POS",
    "Token",
    "annotate_corpus",
    "annotate_sentence",
    "tokenize",
]

log = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"\w+(?:['’-]\w+)*|[^\w\s]")

# Mirrors the consumer's contract: is_content must be false for these tags.
FUNCTION_WORD_POS = frozenset(
    {"DET", "ADP", "CCONJ", "SCONJ", "CONJ", "PART", "PRON", "AUX", "PUNCT"}
)

_LEXICON = {}
for _pos, _words in {
    "DET": "a an the this that these those each every either neither some "
           "any no another all both",
    "PRON": "i you he she it we they me him her us them mine yours hers "
            "ours theirs my your its our their myself yourself himself "
            "herself itself ourselves yourselves themselves who whom whose "
            "which someone anyone everyone nobody something anything "
            "everything nothing",
    "ADP": "in on at by for with about against between into through during "
           "before after above below to from up down under over of off "
           "near across along around behind beneath beside inside outside "
           "toward towards upon within without",
    "CCONJ": "and or but nor so yet",
    "SCONJ": "because although though while whereas if unless since until "
             "when whenever where wherever whether",
    "AUX": "am is are was were be been being have has had do does did will "
           "would shall should can could may might must",
    "PART": "not",
}.items():
    for _w in _words.split():
        _LEXICON[_w] = _pos

_MONTHS = frozenset(
    "january february march april may june july august september october "
    "november december".split()
)
_WEEKDAYS = frozenset(
    "monday tuesday wednesday thursday friday saturday sunday".split()
)
_ORDINAL_DAY_RE = re.compile(r"\d{1,2}(st|nd|rd|th)$", re.IGNORECASE)
_YEAR_RE = re.compile(r"[12]\d{3}$")
_NUMBER_RE = re.compile(r"\d+([.,/]\d+)*$")


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    pos: str
    ner: str | None
    is_content: bool

    def to_json(self) -> dict:
        return {"surface": self.surface, "lemma": self.lemma, "pos": self.pos,
                "ner": self.ner, "is_content": self.is_content}


def tokenize(text: str) -> list[str]:
    """Apply the documented whitespace-plus-punctuation policy."""
    return _TOKEN_RE.findall(text)


def _pos_tag(surface: str, position: int) -> str:
    lower = surface.lower()
    if not any(ch.isalnum() for ch in surface):
        return "PUNCT"
    if _NUMBER_RE.fullmatch(lower) or _ORDINAL_DAY_RE.fullmatch(lower):
        return "NUM"
    if lower in _LEXICON:
        return _LEXICON[lower]
    if surface[0].isupper() and position > 0:
        return "PROPN"
    if lower.endswith("ly") and len(lower) > 3:
        return "ADV"
    if len(lower) > 4 and (lower.endswith("ing") or lower.endswith("ed")):
        return "VERB"
    return "NOUN"


def _lemma(surface: str, pos: str) -> str:
    # lowercasing only; real lemmatization is out of scope for the builtin
    return surface if pos in ("PUNCT", "NUM") else surface.lower()


def _date_mask(tokens: list[str]) -> list[bool]:
    """True where a token belongs to a date expression."""
    lowers = [t.lower() for t in tokens]
    mask = [False] * len(tokens)
    for i, low in enumerate(lowers):
        if low in _MONTHS or low in _WEEKDAYS or _ORDINAL_DAY_RE.fullmatch(low):
            mask[i] = True
    # bare years and day numbers adjacent to an already-marked token
    for i, low in enumerate(lowers):
        near = (i > 0 and mask[i - 1]) or (i + 1 < len(mask) and mask[i + 1])
        if near and (_YEAR_RE.fullmatch(low) or low.isdigit()):
            mask[i] = True
    return mask


def annotate_sentence(text: str) -> list[Token]:
    surfaces = tokenize(text)
    dates = _date_mask(surfaces)
    out = []
    for i, surface in enumerate(surfaces):
        pos = _pos_tag(surface, i)
        if dates[i]:
            ner = "DATE"
        elif pos == "NUM":
            ner = "CARDINAL"
        else:
            ner = None
        out.append(Token(surface=surface, lemma=_lemma(surface, pos), pos=pos,
                         ner=ner, is_content=pos not in FUNCTION_WORD_POS))
    return out


def annotate_corpus(texts: list[str]) -> dict[int, list[Token]]:
    """Annotate each text; failures are skipped with a log entry.

    Returns a mapping from input index to tokens so callers can tell a
    skipped sentence from an empty one.
    """
    out: dict[int, list[Token]] = {}
    for i, text in enumerate(texts):
        try:
            out[i] = annotate_sentence(text)
        except Exception as exc:  # pragma: no cover - defensive
            log.warning("annotation failed for sentence %d: %s", i, exc)
    return out
