"""Core domain types and the name-normalization rules shared by every stage."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import NewType

EntityId = str

# Produced only by normalize(); an empty NormalizedName never matches anything.
NormalizedName = NewType("NormalizedName", str)

# Entities with at most this many KB statements count as long-tail.
LONG_TAIL_MAX_STATEMENTS = 13

_PID_NUM = re.compile(r"^P(\d+)$")


class DataError(ValueError):
    """Malformed or inconsistent input data (snapshot, corpus, dataset, or facts file)."""


def _strip_surround(text: str) -> str:
    # Drop leading/trailing punctuation and whitespace; internal characters stay.
    start, end = 0, len(text)
    while start < end and (
        text[start].isspace() or unicodedata.category(text[start]).startswith("P")
    ):
        start += 1
    while end > start and (
        text[end - 1].isspace() or unicodedata.category(text[end - 1]).startswith("P")
    ):
        end -= 1
    return text[start:end]


def _normalize_once(text: str) -> str:
    text = unicodedata.normalize("NFKC", text)
    text = text.casefold()
    text = _strip_surround(text)
    return " ".join(text.split())


def normalize(raw: str) -> NormalizedName:
    """Canonicalize a surface name for matching.

    Pipeline: Unicode compatibility normalization, case-fold, strip surrounding
    (not internal) punctuation and whitespace, collapse internal whitespace to
    single spaces. Applied to a fixpoint so the result is idempotent even for
    exotic case-fold/NFKC interactions. Total: any string, including the empty
    one, normalizes without error.
    """
    current = raw
    for _ in range(8):
        step = _normalize_once(current)
        if step == current:
            return NormalizedName(current)
        current = step
    return NormalizedName(current)


def strip_qualifier(name: str) -> str:
    """Remove one trailing parenthetical disambiguator, e.g. "Bratsch (band)" -> "Bratsch".

    Only the trailing balanced group and the whitespace around it are removed;
    anything else (no group, unbalanced parens) returns the input unchanged.
    """
    trimmed = name.rstrip()
    if not trimmed.endswith(")"):
        return name
    depth = 0
    for i in range(len(trimmed) - 1, -1, -1):
        ch = trimmed[i]
        if ch == ")":
            depth += 1
        elif ch == "(":
            depth -= 1
            if depth == 0:
                return trimmed[:i].rstrip()
    return name


def pid_sort_key(pid: str) -> tuple[int, str]:
    """Order Wikidata-style ids numerically (P19 < P108); anything else sorts after, by string."""
    m = _PID_NUM.match(pid)
    return (int(m.group(1)), "") if m else (1 << 62, pid)


@dataclass(frozen=True)
class EntityRecord:
    """One KB entity as carried by a snapshot.

    statement_count is the number of outgoing statements the entity had at
    snapshot-creation time, over the whole KB, not just the relations the
    snapshot retains.
    """

    id: EntityId
    label: str
    aliases: frozenset[str] = frozenset()
    type_tags: frozenset[str] = frozenset()
    statement_count: int = 0

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("entity id must be non-empty")
        if not self.label:
            raise ValueError(f"entity {self.id}: label must be non-empty")
        if self.statement_count < 0:
            raise ValueError(f"entity {self.id}: statement_count must be >= 0")
        object.__setattr__(self, "aliases", frozenset(self.aliases) - {self.label})
        object.__setattr__(self, "type_tags", frozenset(self.type_tags))

    def names(self) -> frozenset[str]:
        """Every surface form this entity is known by: label plus aliases."""
        return self.aliases | {self.label}


@dataclass(frozen=True)
class RelationSpec:
    """A benchmark relation: type signature plus the two prompt templates.

    qa_template carries exactly one [x] placeholder; ed_template carries one
    [x] and the two [ENT] mention markers.
    """

    pid: str
    name: str
    subject_type_label: str
    object_type_label: str
    verb_phrase: str
    qa_template: str
    ed_template: str

    def __post_init__(self) -> None:
        for field_name in ("pid", "name", "subject_type_label", "object_type_label", "verb_phrase"):
            if not getattr(self, field_name):
                raise ValueError(f"relation spec: {field_name} must be non-empty")
        if self.qa_template.count("[x]") != 1:
            raise ValueError(f"relation {self.pid}: qa_template must contain exactly one [x]")
        if self.ed_template.count("[x]") != 1:
            raise ValueError(f"relation {self.pid}: ed_template must contain exactly one [x]")
        if self.ed_template.count("[ENT]") != 2:
            raise ValueError(f"relation {self.pid}: ed_template must contain exactly two [ENT] markers")


@dataclass(frozen=True)
class GroundFact:
    """A canonical subject-predicate-object triple."""

    subject: EntityId
    pid: str
    object: EntityId
