"""Scoring against gold objects, metric aggregation, threshold calibration, annotation sampling."""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .malt import GoldObject, MaltRecord
from .model import EntityId, normalize, pid_sort_key, strip_qualifier
from .pipeline import CorroboratedFact, filter_threshold

logger = logging.getLogger(__name__)

ANNOTATION_HEADER = ("subject_id", "subject_label", "pid", "object_id", "object_label", "evidence", "verdict")


@dataclass(frozen=True)
class RelationMetrics:
    pid: str
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    n_predictions: int
    n_gold: int


@dataclass(frozen=True)
class EvalReport:
    relations: tuple[RelationMetrics, ...]
    aggregate_unweighted: tuple[float, float, float]
    aggregate_weighted: tuple[float, float, float]
    alpha: float | None


@dataclass(frozen=True)
class CalibrationResult:
    alpha: float
    best_f1: float
    curve: tuple[tuple[float, float, float, float], ...]


@dataclass(frozen=True)
class AnnotationRow:
    subject_id: EntityId
    subject_label: str
    pid: str
    object_id: EntityId
    object_label: str
    evidence: str
    verdict: str = ""


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def _gold_name_set(gold: GoldObject) -> frozenset[str]:
    names = set()
    for name in gold.names:
        for variant in (name, strip_qualifier(name)):
            key = normalize(variant)
            if key:
                names.add(key)
    return frozenset(names)


def _matches_object(prediction: CorroboratedFact | str, gold: GoldObject) -> bool:
    if isinstance(prediction, str):
        surface = prediction
    else:
        if prediction.object == gold.id:
            return True
        surface = prediction.surface
    gold_names = _gold_name_set(gold)
    surface_key = normalize(surface)
    if surface_key and surface_key in gold_names:
        return True
    if isinstance(prediction, CorroboratedFact):
        label_key = normalize(prediction.object_label)
        if label_key and label_key in gold_names:
            return True
    return False


def is_correct(prediction: CorroboratedFact | str, gold: MaltRecord) -> bool:
    """The alias-table correctness rule: the prediction counts as correct when its
    surface (or, for canonicalized predictions, the predicted entity) appears in
    some gold object's name set, qualifier-stripped names included.
    """
    if isinstance(prediction, CorroboratedFact) and (
        prediction.subject != gold.subject or prediction.pid != gold.pid
    ):
        raise ValueError(
            f"prediction ({prediction.subject}, {prediction.pid}) does not belong to "
            f"gold record ({gold.subject}, {gold.pid})"
        )
    return any(_matches_object(prediction, g) for g in gold.gold_objects)


def evaluate(
    predictions: Sequence[CorroboratedFact],
    gold_records: Sequence[MaltRecord],
    alpha: float | None = None,
) -> EvalReport:
    """Count matches between (already filtered) predictions and gold triples, per relation.

    tp counts each gold (S, P, O) triple matched by at least one prediction;
    a prediction is fp unless it matches at least one gold triple; fn counts
    gold triples never matched. Predictions for a (subject, pid) pair absent
    from the gold records count as fp, with a warning.
    """
    gold_by_pid: dict[str, list[tuple[EntityId, GoldObject]]] = {}
    gold_pairs: set[tuple[EntityId, str]] = set()
    for record in gold_records:
        gold_pairs.add((record.subject, record.pid))
        triples = gold_by_pid.setdefault(record.pid, [])
        for gold in record.gold_objects:
            triples.append((record.subject, gold))
    preds_by_pid: dict[str, list[CorroboratedFact]] = {}
    for prediction in predictions:
        preds_by_pid.setdefault(prediction.pid, []).append(prediction)
        if (prediction.subject, prediction.pid) not in gold_pairs:
            logger.warning(
                "prediction (%s, %s) has no gold record; counted as a false positive",
                prediction.subject,
                prediction.pid,
            )

    rows = []
    for pid in sorted(set(gold_by_pid) | set(preds_by_pid), key=pid_sort_key):
        gold_triples = gold_by_pid.get(pid, [])
        preds = preds_by_pid.get(pid, [])
        matched_gold = [
            any(p.subject == subject and _matches_object(p, gold) for p in preds)
            for subject, gold in gold_triples
        ]
        pred_matches = [
            any(p.subject == subject and _matches_object(p, gold) for subject, gold in gold_triples)
            for p in preds
        ]
        tp = sum(matched_gold)
        fn = len(gold_triples) - tp
        fp = len(pred_matches) - sum(pred_matches)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        rows.append(
            RelationMetrics(
                pid=pid,
                precision=precision,
                recall=recall,
                f1=f1_score(precision, recall),
                tp=tp,
                fp=fp,
                fn=fn,
                n_predictions=len(preds),
                n_gold=len(gold_triples),
            )
        )
    if rows:
        unweighted = aggregate(rows, mode="unweighted")
        total_gold = sum(r.n_gold for r in rows)
        weighted = aggregate(rows, mode="weighted") if total_gold else unweighted
    else:
        unweighted = weighted = (0.0, 0.0, 0.0)
    return EvalReport(
        relations=tuple(rows),
        aggregate_unweighted=unweighted,
        aggregate_weighted=weighted,
        alpha=alpha,
    )


def aggregate(
    rows: Sequence[RelationMetrics] | Sequence[tuple[float, float, float]],
    mode: str = "unweighted",
    weights: Sequence[float] | None = None,
) -> tuple[float, float, float]:
    """Combine per-relation (P, R, F1) rows into one row.

    unweighted: the arithmetic mean of each column. weighted: the weighted
    mean, using explicit weights or, for metric rows, each relation's gold
    triple count.
    """
    if not rows:
        raise ValueError("aggregate needs at least one row")
    if mode not in ("unweighted", "weighted"):
        raise ValueError(f"unknown aggregation mode {mode!r}")
    triples = [
        (row.precision, row.recall, row.f1) if isinstance(row, RelationMetrics) else tuple(row)
        for row in rows
    ]
    if any(len(t) != 3 for t in triples):
        raise ValueError("each row must carry exactly (precision, recall, f1)")
    if mode == "unweighted":
        w = [1.0] * len(triples)
    elif weights is not None:
        w = [float(x) for x in weights]
        if len(w) != len(triples):
            raise ValueError("weights and rows must have the same length")
    else:
        if not all(isinstance(row, RelationMetrics) for row in rows):
            raise ValueError("weighted aggregation of plain rows needs explicit weights")
        w = [float(row.n_gold) for row in rows]
    total = sum(w)
    if total == 0:
        raise ValueError("weights sum to zero")
    return tuple(sum(wi * t[col] for wi, t in zip(w, triples)) / total for col in range(3))  # type: ignore[return-value]


def calibrate_alpha(
    facts: Sequence[CorroboratedFact], validation_gold: Sequence[MaltRecord]
) -> CalibrationResult:
    """Sweep the cutoff over every distinct fused score (plus 0) and keep the
    alpha maximizing unweighted-aggregate F1, ties resolved toward the larger alpha.
    """
    if not validation_gold:
        raise ValueError("validation set is empty; re-split the dataset before calibrating")
    alphas = sorted({0.0} | {f.fused_score for f in facts})
    curve = []
    for alpha in alphas:
        report = evaluate(filter_threshold(facts, alpha), validation_gold, alpha=alpha)
        p, r, f1 = report.aggregate_unweighted
        curve.append((alpha, p, r, f1))
    best_f1 = max(point[3] for point in curve)
    best_alpha = max(point[0] for point in curve if point[3] == best_f1)
    return CalibrationResult(alpha=best_alpha, best_f1=best_f1, curve=tuple(curve))


def sample_for_annotation(
    facts: Sequence[CorroboratedFact],
    gold_records: Sequence[MaltRecord],
    per_relation: int = 25,
    seed: int = 0,
) -> list[AnnotationRow]:
    """Seeded uniform sample of novel facts (those matching no gold triple) per relation.

    Relations with fewer than per_relation novel facts contribute everything
    they have, with a warning. Rows carry an empty verdict column for the
    annotators.
    """
    if per_relation < 1:
        raise ValueError("per_relation must be >= 1")
    gold_by_key: dict[tuple[EntityId, str], list[MaltRecord]] = {}
    for record in gold_records:
        gold_by_key.setdefault((record.subject, record.pid), []).append(record)

    novel_by_pid: dict[str, list[CorroboratedFact]] = {}
    for fact in facts:
        matched = any(
            is_correct(fact, record) for record in gold_by_key.get((fact.subject, fact.pid), ())
        )
        if not matched:
            novel_by_pid.setdefault(fact.pid, []).append(fact)

    rows: list[AnnotationRow] = []
    for pid in sorted(novel_by_pid, key=pid_sort_key):
        pool = sorted(novel_by_pid[pid], key=lambda f: (f.subject, f.object, f.surface))
        if len(pool) < per_relation:
            logger.warning(
                "relation %s has %d novel facts, fewer than %d; taking all", pid, len(pool), per_relation
            )
        rng = random.Random(f"{seed}:{pid}")
        chosen = rng.sample(pool, min(per_relation, len(pool)))
        for fact in chosen:
            rows.append(
                AnnotationRow(
                    subject_id=fact.subject,
                    subject_label=fact.subject_label,
                    pid=pid,
                    object_id=fact.object,
                    object_label=fact.object_label,
                    evidence=fact.evidence_text,
                )
            )
    return rows


def write_annotation_csv(rows: Iterable[AnnotationRow], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANNOTATION_HEADER)
        for row in rows:
            writer.writerow(
                (row.subject_id, row.subject_label, row.pid, row.object_id, row.object_label, row.evidence, row.verdict)
            )
            count += 1
    return count


def report_to_dict(report: EvalReport) -> dict:
    return {
        "alpha": report.alpha,
        "relations": [
            {
                "pid": r.pid,
                "precision": r.precision,
                "recall": r.recall,
                "f1": r.f1,
                "tp": r.tp,
                "fp": r.fp,
                "fn": r.fn,
                "n_predictions": r.n_predictions,
                "n_gold": r.n_gold,
            }
            for r in report.relations
        ],
        "aggregate_unweighted": {
            "precision": report.aggregate_unweighted[0],
            "recall": report.aggregate_unweighted[1],
            "f1": report.aggregate_unweighted[2],
        },
        "aggregate_weighted": {
            "precision": report.aggregate_weighted[0],
            "recall": report.aggregate_weighted[1],
            "f1": report.aggregate_weighted[2],
        },
    }


def format_report_table(report: EvalReport) -> str:
    """Aligned text table in (Relation ID, P, R, F1) order, percentages at one decimal."""
    header = ("ID", "P", "R", "F1", "tp", "fp", "fn", "gold")
    body = [
        (
            r.pid,
            f"{100 * r.precision:.1f}",
            f"{100 * r.recall:.1f}",
            f"{100 * r.f1:.1f}",
            str(r.tp),
            str(r.fp),
            str(r.fn),
            str(r.n_gold),
        )
        for r in report.relations
    ]
    for label, agg in (
        ("Micro-Avg (unweighted)", report.aggregate_unweighted),
        ("Micro-Avg (gold-weighted)", report.aggregate_weighted),
    ):
        body.append((label, f"{100 * agg[0]:.1f}", f"{100 * agg[1]:.1f}", f"{100 * agg[2]:.1f}", "", "", "", ""))
    widths = [max(len(header[i]), *(len(row[i]) for row in body)) for i in range(len(header))]
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(header))]
    for row in body:
        lines.append("  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)))
    alpha_line = f"alpha: {report.alpha}\n" if report.alpha is not None else ""
    return alpha_line + "\n".join(lines) + "\n"


def calibration_to_dict(result: CalibrationResult) -> dict:
    return {
        "alpha": result.alpha,
        "best_f1": result.best_f1,
        "curve": [
            {"alpha": a, "precision": p, "recall": r, "f1": f} for a, p, r, f in result.curve
        ],
    }
