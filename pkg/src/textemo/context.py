"""Context windows: the utterances preceding a prediction target.

Session mode takes the preceding utterances from the same conversation
(session number + recording letter). Script mode additionally stops at the
script boundary, so a target early in a script gets a short window even when
more history exists in the session. All utterances are usable as context
regardless of their need_prediction flag.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .corpus import Corpus, UtteranceRecord

logger = logging.getLogger(__name__)

ENSEMBLE_SOURCE = "ensemble"
EMPTY_CONTEXT = "(no prior context)"

MODE_SESSION = "session"
MODE_SCRIPT = "script"


class UnknownTextSource(ValueError):
    """text_source names neither 'ensemble' nor any ASR model in the corpus."""


class InvalidTarget(IndexError):
    """Target position outside the corpus."""


@dataclass
class ContextWindow:
    """Preceding (speaker, text) pairs in conversation order, oldest first."""

    items: list[tuple[str, str]]
    mode: str
    requested_length: int
    truncated_by_boundary: bool


def resolve_text(record: UtteranceRecord, text_source: str) -> str:
    """Record text under the requested source, falling back to the longest
    available transcription (with a warning) when the source is absent."""
    if text_source == ENSEMBLE_SOURCE:
        if record.ensemble is not None:
            return record.ensemble
    elif text_source in record.transcriptions:
        return record.transcriptions[text_source]
    fallback = max(record.transcriptions.values(), key=len)
    logger.warning(
        "record %d (%s): no %r text, falling back to longest transcription",
        record.file_position,
        record.id.raw,
        text_source,
    )
    return fallback


def _check_text_source(corpus: Corpus, text_source: str) -> None:
    if text_source == ENSEMBLE_SOURCE:
        return
    if text_source not in corpus.model_names():
        raise UnknownTextSource(f"{text_source!r} is not 'ensemble' or an ASR model in this corpus")


def build_context(
    corpus: Corpus,
    target: int,
    mode: str = MODE_SCRIPT,
    length: int = 3,
    text_source: str = ENSEMBLE_SOURCE,
) -> ContextWindow:
    """Window of up to `length` utterances preceding `target` in file order.

    Eligibility is same-session (session mode) or same-script (script mode);
    the window is the last `length` eligible predecessors, oldest first.
    truncated_by_boundary is set when ineligible predecessors, not the length
    budget or the start of the corpus, capped the window.
    """
    if mode not in (MODE_SESSION, MODE_SCRIPT):
        raise ValueError(f"unknown context mode {mode!r}")
    if length < 1:
        raise ValueError("context length must be >= 1")
    if not 0 <= target < len(corpus.records):
        raise InvalidTarget(f"position {target} outside corpus of {len(corpus.records)} records")
    _check_text_source(corpus, text_source)

    target_rec = corpus.records[target]
    if mode == MODE_SCRIPT:
        wanted = target_rec.id.script_key
        eligible = lambda rec: rec.id.script_key == wanted
    else:
        wanted = target_rec.id.session_key
        eligible = lambda rec: rec.id.session_key == wanted

    collected: list[UtteranceRecord] = []
    pos = target - 1
    while pos >= 0 and len(collected) < length:
        rec = corpus.records[pos]
        if eligible(rec):
            collected.append(rec)
        pos -= 1
    collected.reverse()

    truncated = len(collected) < length and target > len(collected)
    items = [(rec.speaker, resolve_text(rec, text_source)) for rec in collected]
    return ContextWindow(
        items=items,
        mode=mode,
        requested_length=length,
        truncated_by_boundary=truncated,
    )


def format_context(window: ContextWindow) -> str:
    """Render a window for the {context} prompt slot."""
    if not window.items:
        return EMPTY_CONTEXT
    return " ".join(f"Speaker {speaker} says: {text.strip()}" for speaker, text in window.items)
