"""FastAPI application implementing the /v1 QA + ED wire protocol."""

from __future__ import annotations

import logging

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .config import ServerConfig
from .models import load_ed_model, load_qa_model, translate_markers

logger = logging.getLogger(__name__)


class QaBody(BaseModel):
    question: str
    context: str
    k: int = Field(ge=1)


class EdBody(BaseModel):
    prompt: str
    context: str
    k: int = Field(ge=1)


class AnswerOut(BaseModel):
    text: str
    score: float
    start: int
    end: int


class QaOut(BaseModel):
    answers: list[AnswerOut]


class EntityOut(BaseModel):
    name: str
    score: float


class EdOut(BaseModel):
    entities: list[EntityOut]


def create_app(config: ServerConfig) -> FastAPI:
    app = FastAPI(title="tailkbc-server", version="0.1.0")
    state = {"qa": None, "ed": None, "errors": {}}

    try:
        state["qa"] = load_qa_model(config)
    except Exception as exc:  # degraded, not fatal: health reports it
        logger.exception("QA model %s failed to load", config.qa_model)
        state["errors"]["qa"] = f"{type(exc).__name__}: {exc}"
    try:
        state["ed"] = load_ed_model(config)
    except Exception as exc:
        logger.exception("ED model %s failed to load", config.ed_model)
        state["errors"]["ed"] = f"{type(exc).__name__}: {exc}"

    def require(kind: str):
        model = state[kind]
        if model is None:
            raise HTTPException(status_code=503, detail=f"{kind} model unavailable: {state['errors'].get(kind)}")
        return model

    def check_context_size(*parts: str) -> None:
        total = sum(len(p) for p in parts)
        if total > config.max_context_chars:
            raise HTTPException(
                status_code=413,
                detail=f"request of {total} chars exceeds the {config.max_context_chars}-char context limit",
            )

    @app.get("/v1/health")
    def health() -> dict:
        status = "ok" if not state["errors"] else "degraded"
        return {
            "status": status,
            "models": {
                "qa": {"id": config.qa_model, "loaded": state["qa"] is not None},
                "ed": {"id": config.ed_model, "loaded": state["ed"] is not None},
                **({"errors": state["errors"]} if state["errors"] else {}),
            },
        }

    @app.post("/v1/qa", response_model=QaOut)
    def qa(body: QaBody) -> QaOut:
        model = require("qa")
        check_context_size(body.question, body.context)
        k = min(body.k, config.k_cap)
        answers = model.answer(body.question, body.context, k)
        for answer in answers:
            if body.context[answer["start"] : answer["end"]] != answer["text"]:
                raise HTTPException(status_code=500, detail=f"model produced non-slicing offsets: {answer!r}")
            if not 0.0 <= answer["score"] <= 1.0:
                raise HTTPException(status_code=500, detail=f"model produced an out-of-range score: {answer!r}")
        answers.sort(key=lambda a: (-a["score"], a["start"], a["text"]))
        return QaOut(answers=[AnswerOut(**a) for a in answers[:k]])

    @app.post("/v1/ed", response_model=EdOut)
    def ed(body: EdBody) -> EdOut:
        model = require("ed")
        if body.prompt.count("[ENT]") != 2:
            raise HTTPException(status_code=400, detail="prompt must carry exactly two [ENT] markers")
        check_context_size(body.prompt, body.context)
        k = min(body.k, config.k_cap)
        # Context first, then the marked-up prompt.
        text = f"{body.context} {translate_markers(body.prompt, config.mention_markers)}".strip()
        guesses = list(model.generate(text, k))
        for _, score in guesses:
            if not 0.0 <= score <= 1.0:
                raise HTTPException(status_code=500, detail="model produced an out-of-range score")
        guesses.sort(key=lambda g: (-g[1], g[0]))
        return EdOut(entities=[EntityOut(name=name, score=score) for name, score in guesses[:k]])

    return app
