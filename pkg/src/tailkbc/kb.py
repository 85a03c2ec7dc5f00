"""Snapshot ingestion: the entity store, alias index, and the long-tail / ambiguity tests."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

from . import jsonl
from .model import (
    LONG_TAIL_MAX_STATEMENTS,
    DataError,
    EntityId,
    EntityRecord,
    NormalizedName,
    normalize,
)

logger = logging.getLogger(__name__)

_REQUIRED_FIELDS = ("id", "label", "aliases", "types", "statement_count", "facts")


@dataclass(frozen=True)
class KbSnapshot:
    """An immutable in-memory KB: entities plus the retained (subject, pid) -> objects facts."""

    entities: Mapping[EntityId, EntityRecord]
    facts: Mapping[tuple[EntityId, str], frozenset[EntityId]]

    def objects(self, subject: EntityId, pid: str) -> frozenset[EntityId]:
        return self.facts.get((subject, pid), frozenset())

    def subjects_of(self, pid: str) -> list[EntityId]:
        """Subjects with at least one retained fact for pid, in sorted order."""
        return sorted({s for (s, p) in self.facts if p == pid})

    def triples(self) -> set[tuple[EntityId, str, EntityId]]:
        return {(s, p, o) for (s, p), objs in self.facts.items() for o in objs}


@dataclass(frozen=True)
class NameIndex:
    """Alias table: every normalized surface name -> the entities bearing it."""

    by_name: Mapping[NormalizedName, frozenset[EntityId]]

    def lookup(self, name: str) -> frozenset[EntityId]:
        key = normalize(name)
        if not key:
            return frozenset()
        return self.by_name.get(key, frozenset())


def _parse_record(obj: dict, source: str, lineno: int) -> tuple[EntityRecord, list[tuple[str, str]]]:
    for field in _REQUIRED_FIELDS:
        jsonl.require(obj, field, source, lineno)
    entity_id = obj["id"]
    label = obj["label"]
    aliases = obj["aliases"]
    types = obj["types"]
    statement_count = obj["statement_count"]
    facts = obj["facts"]
    if not isinstance(entity_id, str) or not isinstance(label, str):
        raise DataError(f"{source}: line {lineno}: id and label must be strings")
    if not isinstance(aliases, list) or not all(isinstance(a, str) for a in aliases):
        raise DataError(f"{source}: line {lineno}: aliases must be an array of strings")
    if not isinstance(types, list) or not all(isinstance(t, str) for t in types):
        raise DataError(f"{source}: line {lineno}: types must be an array of strings")
    if isinstance(statement_count, bool) or not isinstance(statement_count, int):
        raise DataError(f"{source}: line {lineno}: statement_count must be an integer")
    if not isinstance(facts, list):
        raise DataError(f"{source}: line {lineno}: facts must be an array")
    fact_pairs: list[tuple[str, str]] = []
    for entry in facts:
        if (
            not isinstance(entry, dict)
            or not isinstance(entry.get("pid"), str)
            or not isinstance(entry.get("object"), str)
        ):
            raise DataError(f"{source}: line {lineno}: each fact needs string fields 'pid' and 'object'")
        fact_pairs.append((entry["pid"], entry["object"]))
    try:
        record = EntityRecord(
            id=entity_id,
            label=label,
            aliases=frozenset(aliases),
            type_tags=frozenset(types),
            statement_count=statement_count,
        )
    except ValueError as exc:
        raise DataError(f"{source}: line {lineno}: {exc}") from exc
    return record, fact_pairs


def load_snapshot(lines: Iterable[str], source: str = "<stream>") -> KbSnapshot:
    """Stream snapshot records (one JSON object per line) into an immutable KbSnapshot.

    Single pass; duplicate ids resolve to the last record seen, with a warning.
    Raises DataError naming the offending line for malformed records, missing
    fields, dangling fact objects, or a statement_count below the record's own
    retained fact count.
    """
    records: dict[EntityId, tuple[EntityRecord, list[tuple[str, str]], int]] = {}
    for lineno, obj in jsonl.iter_records(lines, source=source):
        record, fact_pairs = _parse_record(obj, source, lineno)
        if record.id in records:
            logger.warning("%s: line %d: duplicate entity id %s; last record wins", source, lineno, record.id)
        records[record.id] = (record, fact_pairs, lineno)

    entities = {entity_id: rec for entity_id, (rec, _, _) in records.items()}
    facts: dict[tuple[EntityId, str], set[EntityId]] = {}
    for entity_id, (record, fact_pairs, lineno) in records.items():
        seen: set[tuple[str, str]] = set()
        for pid, obj_id in fact_pairs:
            if obj_id not in entities:
                raise DataError(
                    f"{source}: line {lineno}: fact object {obj_id} of {entity_id} is not in the snapshot"
                )
            seen.add((pid, obj_id))
            facts.setdefault((entity_id, pid), set()).add(obj_id)
        if record.statement_count < len(seen):
            raise DataError(
                f"{source}: line {lineno}: entity {entity_id} lists {len(seen)} facts "
                f"but statement_count is {record.statement_count}"
            )
    return KbSnapshot(
        entities=MappingProxyType(entities),
        facts=MappingProxyType({k: frozenset(v) for k, v in facts.items()}),
    )


def load_snapshot_file(path: str | Path) -> KbSnapshot:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return load_snapshot(fh, source=str(path))


def build_name_index(snapshot: KbSnapshot) -> NameIndex:
    """Index every entity under each of its normalized names; blank names are skipped."""
    buckets: dict[NormalizedName, set[EntityId]] = {}
    for entity in snapshot.entities.values():
        for name in entity.names():
            key = normalize(name)
            if key:
                buckets.setdefault(key, set()).add(entity.id)
    return NameIndex(by_name=MappingProxyType({k: frozenset(v) for k, v in buckets.items()}))


def is_long_tail(entity: EntityRecord) -> bool:
    """True when the entity has at most 13 statements."""
    return entity.statement_count <= LONG_TAIL_MAX_STATEMENTS


def is_ambiguous(entity: EntityRecord, index: NameIndex) -> bool:
    """True when any of the entity's names is shared with another entity."""
    for name in entity.names():
        key = normalize(name)
        if key and len(index.by_name.get(key, ())) >= 2:
            return True
    return False
