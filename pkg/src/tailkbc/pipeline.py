"""The two-stage inference pipeline: candidate generation, corroboration, fusion, filtering."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from statistics import fmean
from typing import Iterable, Mapping, Protocol, Sequence

from . import jsonl
from .backend import BackendError, EdBackend, EdRequest, QaBackend, QaRequest, ed_generate, qa_extract
from .corpus import ArticleStore, ContextSentence, context_windows, sentences
from .kb import KbSnapshot, NameIndex, build_name_index
from .malt import MaltRecord
from .model import DataError, EntityId, EntityRecord, RelationSpec, normalize, pid_sort_key, strip_qualifier
from .prompts import DEFAULT_RELATIONS, relation_registry, render_corroboration_prompt, render_generation_prompt

logger = logging.getLogger(__name__)


class FailureToleranceError(Exception):
    """Raised when more work items fail than the configured tolerance allows."""

    def __init__(self, message: str, failures: list["ItemFailure"], n_items: int) -> None:
        super().__init__(message)
        self.failures = failures
        self.n_items = n_items


@dataclass(frozen=True)
class Candidate:
    """A stage-1 answer surface with its pooled evidence and merged score."""

    subject: EntityId
    pid: str
    surface: str
    evidence: tuple[ContextSentence, ...]
    gen_score: float

    def __post_init__(self) -> None:
        if not self.surface:
            raise ValueError("candidate surface must be non-empty")
        if not self.evidence:
            raise ValueError("candidate must carry at least one evidence sentence")


@dataclass(frozen=True)
class CorroboratedFact:
    """A canonicalized fact: stage-1 surface resolved to a KB entity, with fused score."""

    subject: EntityId
    subject_label: str
    pid: str
    object: EntityId
    object_label: str
    surface: str
    gen_score: float
    ed_score: float
    fused_score: float
    evidence_index: int
    evidence_text: str

    def __post_init__(self) -> None:
        if self.fused_score != (self.gen_score + self.ed_score) / 2:
            raise ValueError("fused_score must be the mean of gen_score and ed_score")


@dataclass(frozen=True)
class ItemFailure:
    subject: EntityId
    pid: str
    error: str


@dataclass
class PipelineResult:
    facts: list[CorroboratedFact]
    failures: list[ItemFailure]
    n_items: int


class CandidateGenerator(Protocol):
    """Stage-1 strategy: produce candidates for a subject-relation pair from its sentences."""

    def generate(
        self, subject: EntityRecord, spec: RelationSpec, sents: Sequence[ContextSentence]
    ) -> list[Candidate]: ...


def generate_candidates(
    subject: EntityRecord,
    spec: RelationSpec,
    sents: Sequence[ContextSentence],
    qa_backend: QaBackend,
    k: int,
) -> list[Candidate]:
    """Query the QA backend once per sentence, pool the spans, and merge duplicates.

    Spans whose normalized surfaces are equal are merged into one candidate
    whose gen_score is the unweighted mean of the merged span scores and whose
    evidence keeps every contributing sentence (best span first). Spans that
    normalize to the empty string are discarded: they can never canonicalize.
    Returns the top k by (gen_score desc, surface asc).
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    prompt = render_generation_prompt(spec, subject.label, subject=subject.id)
    pooled: dict[str, list[tuple[float, int, int, str]]] = {}
    for sent in sents:
        try:
            answers = qa_extract(qa_backend, QaRequest(prompt.text, sent.text, k))
        except BackendError as exc:
            raise type(exc)(f"(subject={subject.id}, sentence={sent.index}) {exc}") from exc
        for answer in answers:
            key = normalize(answer.text)
            if not key:
                continue
            pooled.setdefault(key, []).append((answer.score, sent.index, answer.char_start, answer.text))
    sentence_by_index = {s.index: s for s in sents}
    candidates = []
    for instances in pooled.values():
        instances.sort(key=lambda t: (-t[0], t[1], t[2], t[3]))
        surface = instances[0][3]
        seen_indices: list[int] = []
        for _, sent_index, _, _ in instances:
            if sent_index not in seen_indices:
                seen_indices.append(sent_index)
        candidates.append(
            Candidate(
                subject=subject.id,
                pid=spec.pid,
                surface=surface,
                evidence=tuple(sentence_by_index[i] for i in seen_indices),
                gen_score=fmean(t[0] for t in instances),
            )
        )
    candidates.sort(key=lambda c: (-c.gen_score, c.surface))
    return candidates[:k]


class QaPromptGenerator:
    """The shipped stage-1 generator: relation-specific question prompts over an extractive-QA backend."""

    def __init__(self, backend: QaBackend, k: int = 20) -> None:
        self._backend = backend
        self._k = k

    def generate(
        self, subject: EntityRecord, spec: RelationSpec, sents: Sequence[ContextSentence]
    ) -> list[Candidate]:
        return generate_candidates(subject, spec, sents, self._backend, self._k)


class StaticGenerator:
    """Test double: replays preset candidates per (subject id, pid)."""

    def __init__(self, candidates: Mapping[tuple[EntityId, str], Sequence[Candidate]]) -> None:
        self._candidates = dict(candidates)

    def generate(
        self, subject: EntityRecord, spec: RelationSpec, sents: Sequence[ContextSentence]
    ) -> list[Candidate]:
        return list(self._candidates.get((subject.id, spec.pid), ()))


def match_names(surface: str, entity: EntityRecord) -> bool:
    """Name-set match: the normalized surface equals a normalized entity name,
    with or without a trailing parenthetical qualifier on the entity side.

    Exact equality under normalization only; fragments of multi-word names do
    not match.
    """
    target = normalize(surface)
    if not target:
        return False
    for name in entity.names():
        if normalize(name) == target or normalize(strip_qualifier(name)) == target:
            return True
    return False


def corroborate(
    candidate: Candidate,
    spec: RelationSpec,
    ed_backend: EdBackend,
    name_index: NameIndex,
    snapshot: KbSnapshot,
    k: int,
) -> CorroboratedFact | None:
    """Stage 2: verify a candidate against the disambiguation backend and canonicalize it.

    The [ENT]-marked prompt is sent with the candidate's best evidence sentence
    as context. Guesses are scanned in rank order; the first whose resolved
    entity's names match the candidate surface wins and fixes both the object
    and the ed_score. Returns None when no guess matches (candidate pruned).
    Guess names that resolve to no KB entity are skipped.
    """
    subject = snapshot.entities[candidate.subject]
    evidence = candidate.evidence[0]
    prompt = render_corroboration_prompt(spec, subject.label, subject=subject.id)
    try:
        guesses = ed_generate(ed_backend, EdRequest(prompt.text, evidence.text, k))
    except BackendError as exc:
        raise type(exc)(f"(subject={subject.id}, sentence={evidence.index}) {exc}") from exc
    for guess in guesses:
        entity_ids = name_index.lookup(guess.name)
        if not entity_ids:
            logger.debug("guess %r resolves to no KB entity; skipped", guess.name)
            continue
        for entity_id in sorted(entity_ids):
            entity = snapshot.entities[entity_id]
            if match_names(candidate.surface, entity):
                return CorroboratedFact(
                    subject=subject.id,
                    subject_label=subject.label,
                    pid=spec.pid,
                    object=entity.id,
                    object_label=entity.label,
                    surface=candidate.surface,
                    gen_score=candidate.gen_score,
                    ed_score=guess.score,
                    fused_score=(candidate.gen_score + guess.score) / 2,
                    evidence_index=evidence.index,
                    evidence_text=evidence.text,
                )
    return None


def _as_work_items(
    items: Iterable[MaltRecord] | Iterable[tuple[EntityId, str]],
) -> list[tuple[EntityId, str]]:
    work = []
    for item in items:
        if isinstance(item, MaltRecord):
            work.append((item.subject, item.pid))
        else:
            subject, pid = item
            work.append((subject, pid))
    return work


def run_pipeline(
    items: Iterable[MaltRecord] | Iterable[tuple[EntityId, str]],
    snapshot: KbSnapshot,
    corpus: ArticleStore,
    *,
    ed_backend: EdBackend,
    qa_backend: QaBackend | None = None,
    generator: CandidateGenerator | None = None,
    relations: Sequence[RelationSpec] = DEFAULT_RELATIONS,
    k: int = 20,
    max_in_flight: int = 8,
    failure_tolerance: float = 0.1,
    context_window: int = 1,
) -> PipelineResult:
    """Run both stages for every (subject, relation) work item.

    Facts are deduplicated on (subject, pid, object) keeping the maximum fused
    score, then ordered by (pid, subject, fused_score desc, object id), so the
    output is identical regardless of scheduling. Per-item errors are recorded
    and skipped; the run aborts with FailureToleranceError when more than
    failure_tolerance of the items fail. context_window > 1 joins that many
    adjacent sentences into each context unit.
    """
    if generator is None:
        if qa_backend is None:
            raise ValueError("either a stage-1 generator or a qa_backend is required")
        generator = QaPromptGenerator(qa_backend, k)
    registry = relation_registry(relations)
    index = build_name_index(snapshot)
    work = _as_work_items(items)

    def process(item: tuple[EntityId, str]) -> list[CorroboratedFact]:
        subject_id, pid = item
        if pid not in registry:
            raise DataError(f"relation {pid} is not registered")
        if subject_id not in snapshot.entities:
            raise DataError(f"entity {subject_id} is not in the snapshot")
        spec = registry[pid]
        subject = snapshot.entities[subject_id]
        sents = context_windows(sentences(corpus, subject_id), context_window)
        facts = []
        for candidate in generator.generate(subject, spec, sents):
            fact = corroborate(candidate, spec, ed_backend, index, snapshot, k)
            if fact is not None:
                facts.append(fact)
        return facts

    results: dict[int, list[CorroboratedFact]] = {}
    failures: list[ItemFailure] = []
    if max_in_flight <= 1:
        outcomes = []
        for item in work:
            try:
                outcomes.append(process(item))
            except Exception as exc:
                outcomes.append(exc)
    else:
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            futures = [pool.submit(process, item) for item in work]
            outcomes = []
            for future in futures:
                try:
                    outcomes.append(future.result())
                except Exception as exc:
                    outcomes.append(exc)
    for i, outcome in enumerate(outcomes):
        if isinstance(outcome, Exception):
            subject_id, pid = work[i]
            failures.append(ItemFailure(subject_id, pid, f"{type(outcome).__name__}: {outcome}"))
            logger.warning("item (%s, %s) failed: %s", subject_id, pid, outcome)
        else:
            results[i] = outcome

    if work and len(failures) / len(work) > failure_tolerance:
        raise FailureToleranceError(
            f"{len(failures)} of {len(work)} items failed "
            f"(tolerance {failure_tolerance:.0%})",
            failures=failures,
            n_items=len(work),
        )

    best: dict[tuple[EntityId, str, EntityId], CorroboratedFact] = {}
    for i in sorted(results):
        for fact in results[i]:
            key = (fact.subject, fact.pid, fact.object)
            current = best.get(key)
            if current is None or _dedup_rank(fact) < _dedup_rank(current):
                best[key] = fact
    facts = sorted(
        best.values(), key=lambda f: (pid_sort_key(f.pid), f.subject, -f.fused_score, f.object)
    )
    return PipelineResult(facts=facts, failures=failures, n_items=len(work))


def _dedup_rank(fact: CorroboratedFact) -> tuple:
    # Highest fused score wins; remaining fields only break exact ties deterministically.
    return (-fact.fused_score, fact.evidence_index, fact.surface)


def filter_threshold(facts: Sequence[CorroboratedFact], alpha: float) -> list[CorroboratedFact]:
    """Keep facts with fused_score >= alpha, preserving order."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must be within [0, 1]")
    return [f for f in facts if f.fused_score >= alpha]


def fact_to_dict(fact: CorroboratedFact) -> dict:
    return {
        "subject": fact.subject,
        "subject_label": fact.subject_label,
        "pid": fact.pid,
        "object": fact.object,
        "object_label": fact.object_label,
        "surface": fact.surface,
        "gen_score": fact.gen_score,
        "ed_score": fact.ed_score,
        "fused_score": fact.fused_score,
        "evidence_index": fact.evidence_index,
        "evidence_text": fact.evidence_text,
    }


def _fact_from_dict(obj: dict, source: str, lineno: int) -> CorroboratedFact:
    fields = (
        "subject",
        "subject_label",
        "pid",
        "object",
        "object_label",
        "surface",
        "gen_score",
        "ed_score",
        "fused_score",
        "evidence_index",
        "evidence_text",
    )
    for field in fields:
        jsonl.require(obj, field, source, lineno)
    try:
        return CorroboratedFact(**{field: obj[field] for field in fields})
    except (TypeError, ValueError) as exc:
        raise DataError(f"{source}: line {lineno}: malformed fact: {exc}") from exc


def write_facts(facts: Iterable[CorroboratedFact], path: str | Path) -> int:
    return jsonl.write_lines(path, (fact_to_dict(f) for f in facts))


def read_facts(path: str | Path) -> list[CorroboratedFact]:
    return [_fact_from_dict(obj, str(path), lineno) for lineno, obj in jsonl.iter_file_records(path)]
