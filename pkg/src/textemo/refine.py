"""Transcription refinement: drop uninformatively short ASR outputs, then pick
the best survivor.

The selector is either an LLM asked to choose the most coherent candidate, or
a deterministic longest-text rule. The LLM may only select, never rewrite: its
response is matched against the candidate set and any non-matching response
falls back to the longest candidate. The chosen text is written to the
record's "ensemble" field.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from .corpus import UtteranceRecord
from .llm import CompletionCache, CompletionRequest, HttpBackend, MockBackend, RetryPolicy, complete

logger = logging.getLogger(__name__)

SELECTION_INSTRUCTION = (
    "You are a text refinement assistant. Choose the most comprehensive and "
    "coherent sentence from the following options. If impossible to decide, "
    "choose the longest option available. Output only the selected sentence "
    "without any additional explanation or phrases."
)

DEFAULT_MIN_LENGTH = 5

SOURCE_LLM = "llm_selected"
SOURCE_LONGEST = "longest_fallback"
SOURCE_ALL_SHORT = "all_short_longest"


@dataclass
class RefinementConfig:
    """Knobs for the filter-and-select refinement pass."""

    min_length: int = DEFAULT_MIN_LENGTH
    length_unit: str = "characters"  # or "tokens"
    selector: str = "llm"  # or "longest_only"
    model_priority: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.min_length < 1:
            raise ValueError("min_length must be >= 1")
        if self.length_unit not in ("characters", "tokens"):
            raise ValueError(f"unknown length_unit {self.length_unit!r}")
        if self.selector not in ("llm", "longest_only"):
            raise ValueError(f"unknown selector {self.selector!r}")
        if len(set(self.model_priority)) != len(self.model_priority):
            raise ValueError("model_priority contains duplicates")


@dataclass
class RefinementOutcome:
    """Result of refining one record; chosen is always one of the candidates."""

    chosen: str
    chosen_source: str
    candidates_kept: list[tuple[str, str]]
    llm_raw: str | None = None


def _length(text: str, unit: str) -> int:
    return len(text) if unit == "characters" else len(text.split())


def filter_transcriptions(record: UtteranceRecord, cfg: RefinementConfig) -> list[tuple[str, str]]:
    """Keep candidates strictly longer than min_length; if none survive,
    return every candidate unchanged.

    Order is model_priority first, then record insertion order.
    """
    priority = {name: pos for pos, name in enumerate(cfg.model_priority)}
    ordered = sorted(
        record.transcriptions.items(),
        key=lambda mt: priority.get(mt[0], len(priority)),
    )
    kept = [(m, t) for m, t in ordered if _length(t, cfg.length_unit) > cfg.min_length]
    return kept if kept else ordered


def select_longest(candidates: list[tuple[str, str]], cfg: RefinementConfig) -> tuple[str, str]:
    """Candidate with the maximum character count; ties broken by
    model_priority position, then model name."""
    if not candidates:
        raise ValueError("no candidates to select from")
    priority = {name: pos for pos, name in enumerate(cfg.model_priority)}
    return min(candidates, key=lambda mt: (-len(mt[1]), priority.get(mt[0], len(priority)), mt[0]))


def build_refine_prompt(candidates: list[tuple[str, str]]) -> str:
    """Selection instruction plus the candidate texts as a numbered list.

    Newlines inside a candidate are flattened to spaces so the one-candidate-
    per-line framing survives. Model names are withheld to keep the selector
    unbiased.
    """
    lines = [f"{i}. " + text.replace("\n", " ") for i, (_, text) in enumerate(candidates, start=1)]
    return SELECTION_INSTRUCTION + "\n" + "\n".join(lines)


def refine_record(
    record: UtteranceRecord,
    cfg: RefinementConfig,
    backend: MockBackend | HttpBackend | None = None,
    cache: CompletionCache | None = None,
    retry: RetryPolicy | None = None,
    llm_model: str = "gpt-3.5-turbo",
) -> RefinementOutcome:
    """Filter the record's transcriptions, select one, and write it to
    record.ensemble.

    With the llm selector, a response that matches a candidate (after trim
    and case-fold) is chosen; anything else falls back to the longest
    candidate. BackendError propagates once retries are exhausted and the
    record is left unrefined.
    """
    candidates = filter_transcriptions(record, cfg)
    all_short = all(_length(t, cfg.length_unit) <= cfg.min_length for t in record.transcriptions.values())
    fallback_source = SOURCE_ALL_SHORT if all_short else SOURCE_LONGEST

    llm_raw: str | None = None
    chosen: tuple[str, str] | None = None
    source = fallback_source

    if cfg.selector == "llm":
        if backend is None:
            raise ValueError("llm selector requires a backend")
        request = CompletionRequest(
            model=llm_model,
            prompt=build_refine_prompt(candidates),
            temperature=0.0,
            max_tokens=128,
        )
        completion = complete(request, backend, cache=cache, retry=retry)
        llm_raw = completion.raw_text
        wanted = llm_raw.strip().casefold()
        for model, text in candidates:
            if text.strip().casefold() == wanted:
                chosen = (model, text)
                source = SOURCE_LLM
                break

    if chosen is None:
        chosen = select_longest(candidates, cfg)

    record.ensemble = chosen[1]
    return RefinementOutcome(
        chosen=chosen[1],
        chosen_source=source,
        candidates_kept=candidates,
        llm_raw=llm_raw,
    )
