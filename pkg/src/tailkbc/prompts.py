"""Prompt construction for the two stages: question prompts and [ENT]-marked disambiguation prompts."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal

from .model import DataError, EntityId, RelationSpec

PromptKind = Literal["generation", "corroboration"]


@dataclass(frozen=True)
class RenderedPrompt:
    text: str
    kind: PromptKind
    pid: str
    subject: EntityId | None = None

    def __post_init__(self) -> None:
        if self.kind == "generation" and not self.text.endswith("?"):
            raise ValueError(f"generation prompt for {self.pid} must end with '?'")
        if self.kind == "corroboration" and self.text.count("[ENT]") != 2:
            raise ValueError(f"corroboration prompt for {self.pid} must carry exactly two [ENT] markers")


def make_generic_spec(
    pid: str, name: str, subject_type: str, verb_phrase: str, object_type: str
) -> RelationSpec:
    """Build a relation spec from its verbalizer, using the generic template pair.

    Question form: "the <subject type> [x] <verb phrase> which <object type>?"
    Disambiguation form replaces the question tail with "[ENT] this <object type> [ENT]".
    """
    return RelationSpec(
        pid=pid,
        name=name,
        subject_type_label=subject_type,
        object_type_label=object_type,
        verb_phrase=verb_phrase,
        qa_template=f"the {subject_type} [x] {verb_phrase} which {object_type}?",
        ed_template=f"the {subject_type} [x] {verb_phrase} [ENT] this {object_type} [ENT]",
    )


#: The eight shipped benchmark relations.
DEFAULT_RELATIONS: tuple[RelationSpec, ...] = (
    make_generic_spec("P112", "founded by", "business", "is founded by", "person"),
    make_generic_spec("P175", "performer", "song", "is performed by", "person"),
    make_generic_spec("P86", "composer", "song", "is composed by", "person"),
    make_generic_spec("P19", "place of birth", "person", "was born in", "place"),
    make_generic_spec("P20", "place of death", "person", "died in", "place"),
    make_generic_spec("P108", "employer", "person", "worked in", "place"),
    make_generic_spec("P69", "educated at", "person", "graduated from", "place"),
    make_generic_spec("P551", "residence", "person", "lived in", "place"),
)


def relation_registry(specs: Iterable[RelationSpec] = DEFAULT_RELATIONS) -> dict[str, RelationSpec]:
    registry: dict[str, RelationSpec] = {}
    for spec in specs:
        if spec.pid in registry:
            raise ValueError(f"duplicate relation spec for {spec.pid}")
        registry[spec.pid] = spec
    return registry


def load_relations(path: str | Path) -> tuple[RelationSpec, ...]:
    """Read a registry override: a JSON array of relation spec objects.

    Entries may give explicit qa_template/ed_template strings; when omitted,
    both are derived from the generic template pair.
    """
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise DataError(f"{path}: expected a JSON array of relation specs")
    specs = []
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise DataError(f"{path}: entry {i}: expected an object")
        try:
            if "qa_template" in entry or "ed_template" in entry:
                spec = RelationSpec(
                    pid=entry["pid"],
                    name=entry["name"],
                    subject_type_label=entry["subject_type_label"],
                    object_type_label=entry["object_type_label"],
                    verb_phrase=entry["verb_phrase"],
                    qa_template=entry["qa_template"],
                    ed_template=entry["ed_template"],
                )
            else:
                spec = make_generic_spec(
                    entry["pid"],
                    entry["name"],
                    entry["subject_type_label"],
                    entry["verb_phrase"],
                    entry["object_type_label"],
                )
        except KeyError as exc:
            raise DataError(f"{path}: entry {i}: missing field {exc.args[0]!r}") from exc
        except ValueError as exc:
            raise DataError(f"{path}: entry {i}: {exc}") from exc
        specs.append(spec)
    return tuple(specs)


def render_generation_prompt(
    spec: RelationSpec, subject_label: str, subject: EntityId | None = None
) -> RenderedPrompt:
    """Fill the question template with the subject label (leftmost [x], exactly once)."""
    return RenderedPrompt(
        text=spec.qa_template.replace("[x]", subject_label, 1),
        kind="generation",
        pid=spec.pid,
        subject=subject,
    )


def render_corroboration_prompt(
    spec: RelationSpec, subject_label: str, subject: EntityId | None = None
) -> RenderedPrompt:
    """Fill the [ENT]-marked disambiguation template with the subject label."""
    return RenderedPrompt(
        text=spec.ed_template.replace("[x]", subject_label, 1),
        kind="corroboration",
        pid=spec.pid,
        subject=subject,
    )
