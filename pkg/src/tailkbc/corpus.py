"""Per-subject article store and the deterministic sentence splitter."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from . import jsonl
from .model import DataError, EntityId

logger = logging.getLogger(__name__)

# Trailing tokens that suppress a '.' boundary, plus any single-letter initial.
_ABBREVIATIONS = frozenset({"Mr", "Dr", "St", "No", "vs"})
_TERMINATORS = frozenset(".!?")
_MIN_SENTENCE_CHARS = 3


@dataclass(frozen=True)
class ArticleStore:
    articles: Mapping[EntityId, str]

    def text_for(self, subject: EntityId) -> str | None:
        return self.articles.get(subject)


@dataclass(frozen=True)
class ContextSentence:
    subject: EntityId
    index: int
    text: str


def load_corpus(lines: Iterable[str], source: str = "<stream>") -> ArticleStore:
    """Stream corpus records ({"id", "text"} per line); duplicate ids keep the last text."""
    articles: dict[EntityId, str] = {}
    for lineno, obj in jsonl.iter_records(lines, source=source):
        entity_id = jsonl.require(obj, "id", source, lineno)
        text = jsonl.require(obj, "text", source, lineno)
        if not isinstance(entity_id, str) or not isinstance(text, str):
            raise DataError(f"{source}: line {lineno}: id and text must be strings")
        if not entity_id:
            raise DataError(f"{source}: line {lineno}: id must be non-empty")
        if entity_id in articles:
            logger.warning("%s: line %d: duplicate article for %s; last one wins", source, lineno, entity_id)
        articles[entity_id] = text
    return ArticleStore(articles=MappingProxyType(articles))


def load_corpus_file(path: str | Path) -> ArticleStore:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return load_corpus(fh, source=str(path))


def _word_before(text: str, i: int) -> str:
    j = i
    while j > 0 and text[j - 1].isalpha():
        j -= 1
    return text[j:i]


def _is_boundary(text: str, i: int) -> bool:
    ch = text[i]
    if ch == ".":
        word = _word_before(text, i)
        if word in _ABBREVIATIONS or (len(word) == 1 and word.isalpha()):
            return False
    j = i + 1
    if j == len(text):
        return True
    if not text[j].isspace():
        return False
    while j < len(text) and text[j].isspace():
        j += 1
    return j == len(text) or text[j].isupper()


def split_sentences(text: str) -> list[str]:
    """Split at '.', '!' or '?' followed by whitespace and an uppercase letter, or end of text.

    A fixed abbreviation list (Mr., Dr., St., No., vs.) and single-letter
    initials suppress '.' boundaries. Trimmed pieces shorter than 3 characters
    are dropped.
    """
    pieces: list[str] = []
    start = 0
    for i, ch in enumerate(text):
        if ch in _TERMINATORS and _is_boundary(text, i):
            pieces.append(text[start : i + 1])
            start = i + 1
    if start < len(text):
        pieces.append(text[start:])
    out = []
    for piece in pieces:
        trimmed = piece.strip()
        if len(trimmed) >= _MIN_SENTENCE_CHARS:
            out.append(trimmed)
    return out


def sentences(store: ArticleStore, subject: EntityId) -> list[ContextSentence]:
    """The subject's article split into ordered context sentences; empty when no article exists."""
    text = store.text_for(subject)
    if text is None:
        return []
    return [ContextSentence(subject, i, s) for i, s in enumerate(split_sentences(text))]


def context_windows(sents: list[ContextSentence], window: int = 1) -> list[ContextSentence]:
    """Join each run of `window` adjacent sentences into one context unit (window=1: unchanged)."""
    if window < 1:
        raise ValueError("window must be >= 1")
    if window == 1 or len(sents) <= 1:
        return list(sents)
    out = []
    for i in range(0, len(sents), window):
        chunk = sents[i : i + window]
        out.append(
            ContextSentence(chunk[0].subject, len(out), " ".join(c.text for c in chunk))
        )
    return out
