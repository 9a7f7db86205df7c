"""Emotion prediction over post-ASR transcripts.

Pipeline stages: corpus loading and id parsing, WER analysis, transcription
refinement, context windowing, prompt rendering, annotator backends, and
evaluation. See the cli module for the batch entry points.
"""

from .context import ContextWindow, build_context, format_context
from .corpus import Corpus, UtteranceId, UtteranceRecord, load_corpus, parse_id, script_key
from .llm import Completion, CompletionCache, CompletionRequest, HttpBackend, MockBackend, complete, normalize_label
from .metrics import EvalReport, compare_reports, evaluate
from .prompts import PromptTemplate, expected_labels, load_templates, render
from .refine import RefinementConfig, RefinementOutcome, refine_record
# the wer() function itself stays namespaced (textemo.wer.wer) so the "wer"
# attribute keeps pointing at the submodule
from .wer import NormalizedTokens, edit_distance, normalize, wer_report

__version__ = "0.1.0"

__all__ = [
    "Completion",
    "CompletionCache",
    "CompletionRequest",
    "ContextWindow",
    "Corpus",
    "EvalReport",
    "HttpBackend",
    "MockBackend",
    "NormalizedTokens",
    "PromptTemplate",
    "RefinementConfig",
    "RefinementOutcome",
    "UtteranceId",
    "UtteranceRecord",
    "build_context",
    "compare_reports",
    "complete",
    "edit_distance",
    "evaluate",
    "expected_labels",
    "format_context",
    "load_corpus",
    "load_templates",
    "normalize",
    "normalize_label",
    "parse_id",
    "refine_record",
    "render",
    "script_key",
    "wer_report",
]
