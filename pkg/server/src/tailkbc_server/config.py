"""Server configuration: model identifiers, device, and protocol limits."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

DEFAULT_QA_MODEL = "mrm8488/spanbert-large-finetuned-squadv2"
ALTERNATE_QA_MODEL = "mrm8488/spanbert-finetuned-squadv2"
DEFAULT_ED_MODEL = "facebook/genre-linking-aidayago2"

#: Deterministic in-process models for tests and offline development.
STUB_MODEL = "stub"


@dataclass(frozen=True)
class ServerConfig:
    qa_model: str = DEFAULT_QA_MODEL
    ed_model: str = DEFAULT_ED_MODEL
    device: str = "cpu"
    max_context_chars: int = 4000
    k_cap: int = 50
    # Mention markers the ED checkpoint expects; the wire prompt's two [ENT]
    # tokens are translated to (start, end) in order.
    mention_markers: tuple[str, str] = ("[START_ENT]", "[END_ENT]")
    max_generated_tokens: int = 32

    def __post_init__(self) -> None:
        if not self.qa_model or not self.ed_model:
            raise ValueError("model identifiers must be non-empty")
        if self.k_cap < 20:
            raise ValueError("k_cap must be >= 20")
        if self.max_context_chars < 1:
            raise ValueError("max_context_chars must be positive")


def load_config(path: str | Path | None = None, **overrides) -> ServerConfig:
    """Build a config from an optional JSON file plus keyword overrides (flags win)."""
    values: dict = {}
    if path is not None:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(raw, dict):
            raise ValueError(f"{path}: expected a JSON object")
        known = {f.name for f in fields(ServerConfig)}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"{path}: unknown config fields: {sorted(unknown)}")
        values.update(raw)
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "mention_markers" in values and not isinstance(values["mention_markers"], tuple):
        values["mention_markers"] = tuple(values["mention_markers"])
    return ServerConfig(**values)
