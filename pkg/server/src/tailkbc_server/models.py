"""Model wrappers: real transformers checkpoints and the deterministic stubs.

Both kinds satisfy the same two small interfaces: a QA model returns scored
answer spans with character offsets into the context, an ED model generates
scored entity names for a marked-up input text. All scores live in [0, 1] at
this boundary; generative sequence log-likelihoods are mapped through
exp(loglik / tokens).
"""

from __future__ import annotations

import logging
import math
import re
from typing import Protocol

from .config import STUB_MODEL, ServerConfig

logger = logging.getLogger(__name__)

_CAPITALIZED_RUN = re.compile(r"\b[A-Z][\w'-]*(?:[ ][A-Z][\w'-]*)*")


class QaModel(Protocol):
    def answer(self, question: str, context: str, k: int) -> list[dict]: ...


class EdModel(Protocol):
    def generate(self, text: str, k: int) -> list[tuple[str, float]]: ...


def normalize_loglik(loglik: float, n_tokens: float) -> float:
    """Map a sequence log-likelihood over n tokens to a score in (0, 1]: exp(loglik / n)."""
    if n_tokens <= 0:
        raise ValueError("n_tokens must be positive")
    return math.exp(min(loglik / n_tokens, 0.0))


def translate_markers(prompt: str, markers: tuple[str, str]) -> str:
    """Rewrite the prompt's two [ENT] tokens to the checkpoint's (start, end) mention markers."""
    start, end = markers
    return prompt.replace("[ENT]", start, 1).replace("[ENT]", end, 1)


class StubQaModel:
    """Offline extractive stand-in: capitalized word runs in the context, rank-decayed scores.

    Purely lexical and deterministic; useful for wire-conformance tests and
    development without checkpoints. Makes no accuracy claims.
    """

    def answer(self, question: str, context: str, k: int) -> list[dict]:
        answers = []
        for rank, match in enumerate(_CAPITALIZED_RUN.finditer(context)):
            answers.append(
                {
                    "text": match.group(0),
                    "score": normalize_loglik(-float(rank + 1), 4.0),
                    "start": match.start(),
                    "end": match.end(),
                }
            )
        return answers


class StubEdModel:
    """Offline generative stand-in: capitalized runs from the input text as entity names."""

    def generate(self, text: str, k: int) -> list[tuple[str, float]]:
        seen: dict[str, float] = {}
        rank = 0
        for match in _CAPITALIZED_RUN.finditer(text):
            name = match.group(0)
            if name not in seen:
                seen[name] = normalize_loglik(-float(rank + 1), 4.0)
                rank += 1
        return list(seen.items())


class TransformersQaModel:
    """Extractive QA over a huggingface checkpoint, deterministic (no sampling)."""

    def __init__(self, model_id: str, device: str) -> None:
        from transformers import pipeline

        self._pipe = pipeline(
            "question-answering", model=model_id, tokenizer=model_id, device=_device_arg(device)
        )

    def answer(self, question: str, context: str, k: int) -> list[dict]:
        results = self._pipe(
            question=question, context=context, top_k=k, handle_impossible_answer=True
        )
        if isinstance(results, dict):
            results = [results]
        answers = []
        for result in results:
            text = result.get("answer") or ""
            if not text:
                continue
            start, end = int(result["start"]), int(result["end"])
            if context[start:end] != text:
                logger.warning("dropping answer whose offsets do not slice the context: %r", result)
                continue
            answers.append(
                {
                    "text": text,
                    "score": min(max(float(result["score"]), 0.0), 1.0),
                    "start": start,
                    "end": end,
                }
            )
        return answers


class TransformersEdModel:
    """Generative entity disambiguation with fixed-width beam search.

    Beam width equals the requested k (capped upstream); scores are
    exp(mean token log-likelihood) of each returned sequence.
    """

    def __init__(self, model_id: str, device: str) -> None:
        from transformers import AutoModelForSeq2SeqLM, AutoTokenizer
        import torch

        self._torch = torch
        self._tokenizer = AutoTokenizer.from_pretrained(model_id)
        self._model = AutoModelForSeq2SeqLM.from_pretrained(model_id).to(device).eval()
        self._device = device

    def generate(self, text: str, k: int) -> list[tuple[str, float]]:
        inputs = self._tokenizer(text, return_tensors="pt", truncation=True).to(self._device)
        with self._torch.no_grad():
            output = self._model.generate(
                **inputs,
                num_beams=k,
                num_return_sequences=k,
                do_sample=False,
                length_penalty=1.0,
                output_scores=True,
                return_dict_in_generate=True,
                max_new_tokens=32,
            )
        names = self._tokenizer.batch_decode(output.sequences, skip_special_tokens=True)
        guesses: dict[str, float] = {}
        for name, mean_loglik in zip(names, output.sequences_scores.tolist()):
            name = name.strip()
            if not name:
                continue
            # sequences_scores is already loglik / length at length_penalty 1.0.
            score = normalize_loglik(float(mean_loglik), 1.0)
            guesses[name] = max(guesses.get(name, 0.0), score)
        return list(guesses.items())


def _device_arg(device: str) -> int | str:
    # transformers pipelines take -1 for CPU, a cuda index, or a device string.
    if device == "cpu":
        return -1
    return device


def load_qa_model(config: ServerConfig) -> QaModel:
    if config.qa_model == STUB_MODEL:
        return StubQaModel()
    return TransformersQaModel(config.qa_model, config.device)


def load_ed_model(config: ServerConfig) -> EdModel:
    if config.ed_model == STUB_MODEL:
        return StubEdModel()
    return TransformersEdModel(config.ed_model, config.device)
