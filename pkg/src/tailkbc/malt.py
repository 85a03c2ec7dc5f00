"""Benchmark construction: sampled subject-relation records, flag statistics, and the hold-out split."""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from . import jsonl
from .kb import KbSnapshot, NameIndex, build_name_index, is_ambiguous, is_long_tail
from .model import DataError, EntityId, RelationSpec, pid_sort_key

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FactFlags:
    multi_token: bool
    ambiguous: bool
    long_tail: bool


@dataclass(frozen=True)
class GoldObject:
    """One gold object with its full surface-name set (label plus aliases)."""

    id: EntityId
    label: str
    names: frozenset[str]


@dataclass(frozen=True)
class MaltRecord:
    """One benchmark item: a subject-relation pair with every gold object kept."""

    subject: EntityId
    subject_label: str
    pid: str
    gold_objects: tuple[GoldObject, ...]
    flags: FactFlags

    def __post_init__(self) -> None:
        if not self.gold_objects:
            raise ValueError(f"record ({self.subject}, {self.pid}): gold_objects must be non-empty")

    @property
    def triple_count(self) -> int:
        return len(self.gold_objects)


@dataclass(frozen=True)
class RelationStats:
    pid: str
    triples: int
    multi_token_pct: float
    ambiguous_pct: float
    long_tail_pct: float


@dataclass(frozen=True)
class StatsTable:
    """Per-relation flag percentages plus the triple-weighted aggregate row."""

    rows: tuple[RelationStats, ...]
    aggregate: tuple[float, float, float]
    total_triples: int


def is_multi_token(label: str) -> bool:
    return len(label.split()) >= 2


def _flags_for(
    subject: EntityId, object_ids: Sequence[EntityId], snapshot: KbSnapshot, index: NameIndex
) -> FactFlags:
    try:
        subject_entity = snapshot.entities[subject]
    except KeyError:
        raise DataError(f"entity {subject} is not in the snapshot") from None
    objects = []
    for object_id in object_ids:
        try:
            objects.append(snapshot.entities[object_id])
        except KeyError:
            raise DataError(f"entity {object_id} is not in the snapshot") from None
    return FactFlags(
        multi_token=any(is_multi_token(o.label) for o in objects),
        ambiguous=is_ambiguous(subject_entity, index) or any(is_ambiguous(o, index) for o in objects),
        long_tail=is_long_tail(subject_entity),
    )


def compute_flags(record: MaltRecord, snapshot: KbSnapshot, index: NameIndex) -> FactFlags:
    """Recompute the record's flags from the snapshot (multi-token object label,
    subject-or-object name collision, long-tail subject)."""
    return _flags_for(record.subject, [o.id for o in record.gold_objects], snapshot, index)


def build_dataset(
    snapshot: KbSnapshot,
    relations: Sequence[RelationSpec],
    per_relation_subject_sample: int | str = "all",
    seed: int = 0,
) -> list[MaltRecord]:
    """Sample subjects per relation (uniformly, without replacement) and keep all their objects.

    Deterministic for a given snapshot, relation set, and seed; records come
    back sorted by (pid, subject id). A relation with no subjects yields a
    warning and an empty section.
    """
    if per_relation_subject_sample != "all":
        if (
            isinstance(per_relation_subject_sample, bool)
            or not isinstance(per_relation_subject_sample, int)
            or per_relation_subject_sample < 1
        ):
            raise ValueError("per_relation_subject_sample must be a positive integer or 'all'")
    index = build_name_index(snapshot)
    records: list[MaltRecord] = []
    for spec in relations:
        subjects = snapshot.subjects_of(spec.pid)
        if not subjects:
            logger.warning("relation %s has no subjects in the snapshot", spec.pid)
            continue
        if per_relation_subject_sample == "all":
            chosen = subjects
        else:
            rng = random.Random(f"{seed}:{spec.pid}")
            chosen = sorted(rng.sample(subjects, min(per_relation_subject_sample, len(subjects))))
        for subject in chosen:
            object_ids = sorted(snapshot.objects(subject, spec.pid))
            gold = tuple(
                GoldObject(
                    id=object_id,
                    label=snapshot.entities[object_id].label,
                    names=snapshot.entities[object_id].names(),
                )
                for object_id in object_ids
            )
            records.append(
                MaltRecord(
                    subject=subject,
                    subject_label=snapshot.entities[subject].label,
                    pid=spec.pid,
                    gold_objects=gold,
                    flags=_flags_for(subject, object_ids, snapshot, index),
                )
            )
    records.sort(key=lambda r: (pid_sort_key(r.pid), r.subject))
    return records


def dataset_stats(records: Iterable[MaltRecord]) -> StatsTable:
    """Fact-weighted flag percentages per relation, plus the triple-weighted aggregate.

    A record contributes one triple per gold object; each triple takes the
    multi-token flag of its own object's label and the record-level ambiguous
    and long-tail flags.
    """
    per_pid: dict[str, list[int]] = {}
    for record in records:
        counts = per_pid.setdefault(record.pid, [0, 0, 0, 0])  # triples, multi, ambiguous, long_tail
        for gold in record.gold_objects:
            counts[0] += 1
            counts[1] += 1 if is_multi_token(gold.label) else 0
            counts[2] += 1 if record.flags.ambiguous else 0
            counts[3] += 1 if record.flags.long_tail else 0
    rows = tuple(
        RelationStats(
            pid=pid,
            triples=counts[0],
            multi_token_pct=100.0 * counts[1] / counts[0],
            ambiguous_pct=100.0 * counts[2] / counts[0],
            long_tail_pct=100.0 * counts[3] / counts[0],
        )
        for pid, counts in sorted(per_pid.items(), key=lambda kv: pid_sort_key(kv[0]))
    )
    total = sum(row.triples for row in rows)
    if total:
        aggregate = (
            sum(row.triples * row.multi_token_pct for row in rows) / total,
            sum(row.triples * row.ambiguous_pct for row in rows) / total,
            sum(row.triples * row.long_tail_pct for row in rows) / total,
        )
    else:
        aggregate = (0.0, 0.0, 0.0)
    return StatsTable(rows=rows, aggregate=aggregate, total_triples=total)


def _validation_size(fraction: float, n: int) -> int:
    # Half-up rounding of fraction * n, reading the fraction as the decimal the
    # caller wrote (0.3 means 3/10, not the nearest binary float).
    exact = Fraction(Decimal(repr(fraction))) * n
    return int(exact + Fraction(1, 2))


def split_dataset(
    records: Sequence[MaltRecord], validation_fraction: float = 0.2, seed: int = 0
) -> tuple[list[MaltRecord], list[MaltRecord]]:
    """Stratified hold-out split: per relation, round(fraction * n) records (half-up) go to validation.

    Disjoint, order-preserving, and reproducible for a given seed. A relation
    with a single record keeps it in the evaluation set, with a warning.
    """
    if not 0.0 < validation_fraction < 1.0:
        raise ValueError("validation_fraction must be strictly between 0 and 1")
    by_pid: dict[str, list[MaltRecord]] = {}
    for record in records:
        by_pid.setdefault(record.pid, []).append(record)
    validation_keys: set[tuple[str, EntityId]] = set()
    for pid in sorted(by_pid, key=pid_sort_key):
        group = sorted(by_pid[pid], key=lambda r: r.subject)
        if len(group) == 1:
            logger.warning("relation %s has a single record; validation split is empty for it", pid)
            continue
        n_validation = _validation_size(validation_fraction, len(group))
        rng = random.Random(f"{seed}:{pid}")
        for i in rng.sample(range(len(group)), n_validation):
            validation_keys.add((pid, group[i].subject))
    evaluation = [r for r in records if (r.pid, r.subject) not in validation_keys]
    validation = [r for r in records if (r.pid, r.subject) in validation_keys]
    return evaluation, validation


def record_to_dict(record: MaltRecord) -> dict:
    return {
        "subject": record.subject,
        "subject_label": record.subject_label,
        "pid": record.pid,
        "gold_objects": [
            {"object": g.id, "label": g.label, "names": sorted(g.names)} for g in record.gold_objects
        ],
        "flags": {
            "multi_token": record.flags.multi_token,
            "ambiguous": record.flags.ambiguous,
            "long_tail": record.flags.long_tail,
        },
    }


def _record_from_dict(obj: dict, source: str, lineno: int) -> MaltRecord:
    for field in ("subject", "subject_label", "pid", "gold_objects", "flags"):
        jsonl.require(obj, field, source, lineno)
    gold_raw = obj["gold_objects"]
    flags_raw = obj["flags"]
    if not isinstance(gold_raw, list) or not gold_raw:
        raise DataError(f"{source}: line {lineno}: gold_objects must be a non-empty array")
    if not isinstance(flags_raw, dict):
        raise DataError(f"{source}: line {lineno}: flags must be an object")
    try:
        gold = tuple(
            GoldObject(id=g["object"], label=g["label"], names=frozenset(g["names"])) for g in gold_raw
        )
        flags = FactFlags(
            multi_token=bool(flags_raw["multi_token"]),
            ambiguous=bool(flags_raw["ambiguous"]),
            long_tail=bool(flags_raw["long_tail"]),
        )
        return MaltRecord(
            subject=obj["subject"],
            subject_label=obj["subject_label"],
            pid=obj["pid"],
            gold_objects=gold,
            flags=flags,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{source}: line {lineno}: malformed record: {exc}") from exc


def write_dataset(records: Iterable[MaltRecord], path: str | Path) -> int:
    return jsonl.write_lines(path, (record_to_dict(r) for r in records))


def read_dataset(path: str | Path) -> list[MaltRecord]:
    return [_record_from_dict(obj, str(path), lineno) for lineno, obj in jsonl.iter_file_records(path)]


def stats_to_dict(table: StatsTable) -> dict:
    return {
        "relations": [
            {
                "pid": row.pid,
                "triples": row.triples,
                "multi_token_pct": row.multi_token_pct,
                "ambiguous_pct": row.ambiguous_pct,
                "long_tail_pct": row.long_tail_pct,
            }
            for row in table.rows
        ],
        "aggregate_weighted": {
            "multi_token_pct": table.aggregate[0],
            "ambiguous_pct": table.aggregate[1],
            "long_tail_pct": table.aggregate[2],
        },
        "total_triples": table.total_triples,
    }


def format_stats_table(table: StatsTable, relations: Sequence[RelationSpec] = ()) -> str:
    """Aligned text table: relation, id, triples, then the three flag percentages."""
    names = {spec.pid: spec.name for spec in relations}
    header = ("Relation", "ID", "Triples", "multi-token (%)", "ambiguous (%)", "long-tail (%)")
    body = [
        (
            names.get(row.pid, "-"),
            row.pid,
            str(row.triples),
            f"{row.multi_token_pct:.1f}",
            f"{row.ambiguous_pct:.1f}",
            f"{row.long_tail_pct:.1f}",
        )
        for row in table.rows
    ]
    body.append(
        (
            "Micro-Avg (triple-weighted)",
            "-",
            str(table.total_triples),
            f"{table.aggregate[0]:.1f}",
            f"{table.aggregate[1]:.1f}",
            f"{table.aggregate[2]:.1f}",
        )
    )
    widths = [max(len(header[i]), *(len(row[i]) for row in body)) for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    for row in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    return "\n".join(lines) + "\n"
