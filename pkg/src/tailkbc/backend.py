"""Inference-backend contract: wire types, protocol gates, HTTP client, and deterministic mocks.

Backends expose extractive QA (scored answer spans) and generative entity
disambiguation (scored entity names) behind one JSON-over-HTTP wire format;
the mocks implement the same interface in-process for tests and demos.
"""

from __future__ import annotations

import json
import logging
import math
import re
import threading
import time
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Iterable, Mapping, Protocol, Sequence

import requests

from .model import EntityId
from .prompts import DEFAULT_RELATIONS
from .kb import KbSnapshot

logger = logging.getLogger(__name__)

_EXCERPT_CHARS = 200


class BackendError(Exception):
    """Base class for backend failures."""


class BackendTransportError(BackendError):
    """The backend could not be reached (after retries)."""


class BackendProtocolError(BackendError):
    """The backend answered outside the wire contract."""


@dataclass(frozen=True)
class SpanAnswer:
    """An extractive answer: text plus [char_start, char_end) offsets into the request context."""

    text: str
    score: float
    char_start: int
    char_end: int


@dataclass(frozen=True)
class EntityGuess:
    """A generated entity name with its score."""

    name: str
    score: float

    def __post_init__(self) -> None:
        if not isinstance(self.name, str) or not self.name:
            raise ValueError("entity guess name must be a non-empty string")


@dataclass(frozen=True)
class QaRequest:
    question: str
    context: str
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.question.endswith("?"):
            raise ValueError("question must end with '?'")


@dataclass(frozen=True)
class EdRequest:
    prompt: str
    context: str
    k: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.prompt.count("[ENT]") != 2:
            raise ValueError("prompt must carry exactly two [ENT] markers")


class QaBackend(Protocol):
    def qa(self, request: QaRequest) -> list[SpanAnswer]: ...


class EdBackend(Protocol):
    def ed(self, request: EdRequest) -> list[EntityGuess]: ...


def _check_score(score: float, payload: object) -> None:
    if not isinstance(score, (int, float)) or isinstance(score, bool) or not math.isfinite(score):
        raise BackendProtocolError(f"score must be a finite number: {repr(payload)[:_EXCERPT_CHARS]}")
    if not 0.0 <= score <= 1.0:
        raise BackendProtocolError(f"score outside [0, 1]: {repr(payload)[:_EXCERPT_CHARS]}")


def qa_extract(backend: QaBackend, request: QaRequest) -> list[SpanAnswer]:
    """Run extractive QA and canonicalize the result.

    Answers are validated (scores in [0, 1], offsets slicing the context to
    exactly the answer text), sorted by score descending with ties broken by
    (char_start, text) ascending, and truncated to k. May be empty.
    """
    answers = list(backend.qa(request))
    for answer in answers:
        _check_score(answer.score, answer)
        if not isinstance(answer.text, str) or any(
            isinstance(offset, bool) or not isinstance(offset, int)
            for offset in (answer.char_start, answer.char_end)
        ):
            raise BackendProtocolError(f"malformed span answer: {repr(answer)[:_EXCERPT_CHARS]}")
        if request.context[answer.char_start : answer.char_end] != answer.text:
            raise BackendProtocolError(
                f"span offsets do not slice the context to the answer text: {repr(answer)[:_EXCERPT_CHARS]}"
            )
    answers.sort(key=lambda a: (-a.score, a.char_start, a.text))
    return answers[: request.k]


def ed_generate(backend: EdBackend, request: EdRequest) -> list[EntityGuess]:
    """Run entity disambiguation and canonicalize: score-descending, name-ascending ties, top-k."""
    guesses = list(backend.ed(request))
    for guess in guesses:
        _check_score(guess.score, guess)
    guesses.sort(key=lambda g: (-g.score, g.name))
    return guesses[: request.k]


class HttpBackend:
    """Client for the /v1 wire protocol, safe for concurrent use.

    Transport failures (connection errors, timeouts, HTTP 5xx) are retried
    with exponential backoff before raising BackendTransportError; anything
    off-contract raises BackendProtocolError with a payload excerpt.
    """

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        max_retries: int = 3,
        backoff_seconds: float = 0.25,
        session: requests.Session | None = None,
    ) -> None:
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        # Sessions are per-thread unless one is injected explicitly.
        self._fixed_session = session
        self._local = threading.local()

    @property
    def _session(self) -> requests.Session:
        if self._fixed_session is not None:
            return self._fixed_session
        if not hasattr(self._local, "session"):
            self._local.session = requests.Session()
        return self._local.session

    def qa(self, request: QaRequest) -> list[SpanAnswer]:
        payload = self._post(
            "/v1/qa", {"question": request.question, "context": request.context, "k": request.k}
        )
        answers = payload.get("answers")
        if not isinstance(answers, list):
            raise BackendProtocolError(f"/v1/qa: missing 'answers' array: {repr(payload)[:_EXCERPT_CHARS]}")
        out = []
        for entry in answers:
            try:
                out.append(
                    SpanAnswer(
                        text=entry["text"],
                        score=entry["score"],
                        char_start=entry["start"],
                        char_end=entry["end"],
                    )
                )
            except (TypeError, KeyError) as exc:
                raise BackendProtocolError(
                    f"/v1/qa: malformed answer entry: {repr(entry)[:_EXCERPT_CHARS]}"
                ) from exc
        return out

    def ed(self, request: EdRequest) -> list[EntityGuess]:
        payload = self._post(
            "/v1/ed", {"prompt": request.prompt, "context": request.context, "k": request.k}
        )
        entities = payload.get("entities")
        if not isinstance(entities, list):
            raise BackendProtocolError(f"/v1/ed: missing 'entities' array: {repr(payload)[:_EXCERPT_CHARS]}")
        out = []
        for entry in entities:
            try:
                out.append(EntityGuess(name=entry["name"], score=entry["score"]))
            except (TypeError, KeyError, ValueError) as exc:
                raise BackendProtocolError(
                    f"/v1/ed: malformed entity entry: {repr(entry)[:_EXCERPT_CHARS]}"
                ) from exc
        return out

    def health(self) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._session.get(self.base_url + "/v1/health", timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                self._sleep(attempt)
                continue
            try:
                body = resp.json()
            except ValueError as exc:
                raise BackendProtocolError(f"/v1/health: non-JSON response: {resp.text[:_EXCERPT_CHARS]}") from exc
            if not isinstance(body, dict):
                raise BackendProtocolError(f"/v1/health: expected an object: {resp.text[:_EXCERPT_CHARS]}")
            return body
        raise BackendTransportError(f"/v1/health: {last_exc}")

    def _sleep(self, attempt: int) -> None:
        if self.backoff_seconds > 0:
            time.sleep(self.backoff_seconds * (2**attempt))

    def _post(self, path: str, body: dict) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.max_retries + 1):
            try:
                resp = self._session.post(self.base_url + path, json=body, timeout=self.timeout)
            except requests.RequestException as exc:
                last_exc = exc
                self._sleep(attempt)
                continue
            if resp.status_code >= 500:
                last_exc = BackendTransportError(f"{path}: HTTP {resp.status_code}")
                self._sleep(attempt)
                continue
            if resp.status_code != 200:
                raise BackendProtocolError(f"{path}: HTTP {resp.status_code}: {resp.text[:_EXCERPT_CHARS]}")
            try:
                payload = resp.json()
            except ValueError as exc:
                raise BackendProtocolError(f"{path}: non-JSON response: {resp.text[:_EXCERPT_CHARS]}") from exc
            if not isinstance(payload, dict):
                raise BackendProtocolError(f"{path}: expected a JSON object: {resp.text[:_EXCERPT_CHARS]}")
            return payload
        raise BackendTransportError(f"{path}: transport failed after {self.max_retries + 1} attempts: {last_exc}")


class _MockQaBackend:
    """Returns every gazetteer surface occurring verbatim in the context, at its first offset."""

    def __init__(self, gazetteer: Mapping[str, float]) -> None:
        for surface, score in gazetteer.items():
            if not surface:
                raise ValueError("gazetteer surfaces must be non-empty")
            if not 0.0 <= score <= 1.0:
                raise ValueError(f"gazetteer score for {surface!r} outside [0, 1]")
        self._gazetteer = dict(gazetteer)

    def qa(self, request: QaRequest) -> list[SpanAnswer]:
        answers = []
        for surface in sorted(self._gazetteer):
            pos = request.context.find(surface)
            if pos >= 0:
                answers.append(SpanAnswer(surface, self._gazetteer[surface], pos, pos + len(surface)))
        return answers


def mock_qa_backend(gazetteer: Mapping[str, float]) -> QaBackend:
    """Deterministic extractive-QA stand-in driven by a surface -> score gazetteer."""
    return _MockQaBackend(gazetteer)


def _match_words(text: str) -> list[str]:
    return re.findall(r"\w+", text.casefold())


def _contains_subsequence(haystack: list[str], needle: tuple[str, ...]) -> bool:
    n = len(needle)
    if n == 0 or n > len(haystack):
        return False
    return any(tuple(haystack[i : i + n]) == needle for i in range(len(haystack) - n + 1))


class _MockEdBackend:
    """Returns labels of entities whose names occur in the context, scored by KB-fact presence.

    The (subject, pid) pair is recovered by matching the prompt against the
    registered disambiguation templates; a guess scores 1.0 when the implied
    (subject, pid, entity) triple is in truth_facts and 0.5 otherwise.
    """

    def __init__(
        self,
        snapshot: KbSnapshot,
        truth_facts: Iterable[tuple[EntityId, str, EntityId]],
        relations: Sequence = DEFAULT_RELATIONS,
    ) -> None:
        self._snapshot = snapshot
        self._truth = frozenset(truth_facts)
        self._patterns = [
            (spec.pid, re.compile("^" + re.escape(spec.ed_template).replace(re.escape("[x]"), "(.+)") + "$"))
            for spec in relations
        ]
        self._name_words: list[tuple[EntityId, str, list[tuple[str, ...]]]] = []
        for entity_id in sorted(snapshot.entities):
            entity = snapshot.entities[entity_id]
            words = [tuple(_match_words(name)) for name in sorted(entity.names())]
            self._name_words.append((entity_id, entity.label, [w for w in words if w]))
        self._by_label: dict[str, list[EntityId]] = {}
        for entity_id in sorted(snapshot.entities):
            self._by_label.setdefault(snapshot.entities[entity_id].label, []).append(entity_id)

    def _parse_prompt(self, prompt: str) -> tuple[str, str] | None:
        for pid, pattern in self._patterns:
            m = pattern.match(prompt)
            if m:
                return pid, m.group(1)
        return None

    def ed(self, request: EdRequest) -> list[EntityGuess]:
        parsed = self._parse_prompt(request.prompt)
        if parsed is None:
            logger.debug("mock ed: prompt matches no registered template: %r", request.prompt)
            return []
        pid, subject_label = parsed
        subject_ids = self._by_label.get(subject_label, [])
        context_words = _match_words(request.context)
        guesses: dict[str, float] = {}
        for entity_id, label, name_words in self._name_words:
            if not any(_contains_subsequence(context_words, words) for words in name_words):
                continue
            in_kb = any((sid, pid, entity_id) in self._truth for sid in subject_ids)
            score = 1.0 if in_kb else 0.5
            guesses[label] = max(guesses.get(label, 0.0), score)
        return [EntityGuess(name, score) for name, score in guesses.items()]


def mock_ed_backend(
    snapshot: KbSnapshot,
    truth_facts: Iterable[tuple[EntityId, str, EntityId]],
    relations: Sequence = DEFAULT_RELATIONS,
) -> EdBackend:
    """Deterministic entity-disambiguation stand-in over a fixture KB."""
    return _MockEdBackend(snapshot, truth_facts, relations)


def serve_backend(
    qa_backend: QaBackend | None,
    ed_backend: EdBackend | None,
    host: str = "127.0.0.1",
    port: int = 0,
) -> ThreadingHTTPServer:
    """Serve backends over the /v1 wire protocol on a local port.

    Returns the server; call serve_forever() (typically from a thread) and
    shutdown() yourself. Intended for tests and demos; the production sidecar
    lives in its own package.
    """

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):  # noqa: D102 - silence default stderr logging
            logger.debug("serve_backend: " + fmt, *args)

        def _send(self, status: int, payload: dict) -> None:
            body = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):  # noqa: N802 - http.server API
            if self.path != "/v1/health":
                self._send(404, {"error": "unknown endpoint"})
                return
            models = {
                "qa": type(qa_backend).__name__ if qa_backend is not None else None,
                "ed": type(ed_backend).__name__ if ed_backend is not None else None,
            }
            self._send(200, {"status": "ok", "models": models})

        def do_POST(self):  # noqa: N802 - http.server API
            length = int(self.headers.get("Content-Length", "0"))
            try:
                body = json.loads(self.rfile.read(length).decode("utf-8"))
            except (ValueError, UnicodeDecodeError):
                self._send(400, {"error": "invalid JSON body"})
                return
            try:
                if self.path == "/v1/qa" and qa_backend is not None:
                    request = QaRequest(body["question"], body["context"], body["k"])
                    answers = qa_extract(qa_backend, request)
                    self._send(
                        200,
                        {
                            "answers": [
                                {"text": a.text, "score": a.score, "start": a.char_start, "end": a.char_end}
                                for a in answers
                            ]
                        },
                    )
                elif self.path == "/v1/ed" and ed_backend is not None:
                    request = EdRequest(body["prompt"], body["context"], body["k"])
                    guesses = ed_generate(ed_backend, request)
                    self._send(200, {"entities": [{"name": g.name, "score": g.score} for g in guesses]})
                else:
                    self._send(404, {"error": "unknown endpoint"})
            except (KeyError, TypeError, ValueError) as exc:
                self._send(400, {"error": f"bad request: {exc}"})

    return ThreadingHTTPServer((host, port), Handler)


def serve_backend_in_thread(
    qa_backend: QaBackend | None, ed_backend: EdBackend | None, host: str = "127.0.0.1"
) -> tuple[ThreadingHTTPServer, str]:
    """Start a loopback wire-protocol server on a free port; returns (server, base_url)."""
    server = serve_backend(qa_backend, ed_backend, host=host, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, f"http://{host}:{server.server_address[1]}"
