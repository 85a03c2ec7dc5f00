"""Line-delimited JSON streaming shared by the snapshot, corpus, dataset, and facts formats."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Iterable, Iterator

from .model import DataError


def iter_records(lines: Iterable[str], source: str = "<stream>") -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield (line_number, object) for each non-blank line; line numbers are 1-based."""
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{source}: line {lineno}: invalid JSON: {exc.msg}") from exc
        if not isinstance(obj, dict):
            raise DataError(f"{source}: line {lineno}: expected a JSON object")
        yield lineno, obj


def iter_file_records(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        yield from iter_records(fh, source=str(path))


def require(obj: dict[str, Any], field: str, source: str, lineno: int) -> Any:
    if field not in obj:
        raise DataError(f"{source}: line {lineno}: missing required field {field!r}")
    return obj[field]


def dumps_line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(", ", ": "))


def write_lines(path: str | Path, objects: Iterable[dict[str, Any]]) -> int:
    """Write one JSON object per line; returns the number of lines written."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for obj in objects:
            fh.write(dumps_line(obj))
            fh.write("\n")
            count += 1
    return count
