"""Experiment orchestration: one prediction run, and the config-driven matrix.

A run walks every record flagged need_prediction, builds its context window,
renders the chosen prompt, resolves it through the annotator backend, and
normalizes the response to a label (falling back to "neutral" when the
response carries no label, counted in fallback_count). Artifacts per run: a
predictions JSON, an eval JSON when truth labels exist, and a line-delimited
JSON run log with one fingerprinted event per prediction. Failed requests go
to a retry manifest instead of aborting the run.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

from .context import build_context, format_context, resolve_text
from .corpus import Corpus
from .llm import (
    BackendError,
    CompletionCache,
    CompletionRequest,
    HttpBackend,
    MockBackend,
    RetryPolicy,
    complete,
)
from .metrics import EmptyInput, EvalReport, evaluate
from .prompts import PromptTemplate, load_templates, render

logger = logging.getLogger(__name__)

FALLBACK_LABEL = "neutral"
DEFAULT_MATRIX_RESOURCE = "experiment_matrix.json"


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment: transcription source, prompt, context policy, backend."""

    name: str
    text_source: str
    prompt: str = "baseline"
    context_length: int = 3
    context_mode: str = "session"
    backend: str = "mock"
    model: str = "gpt-3.5-turbo"

    def __post_init__(self) -> None:
        if self.context_length < 1:
            raise ValueError(f"experiment {self.name!r}: context_length must be >= 1")
        if self.context_mode not in ("session", "script"):
            raise ValueError(f"experiment {self.name!r}: unknown context_mode {self.context_mode!r}")
        if self.backend not in ("mock", "http"):
            raise ValueError(f"experiment {self.name!r}: unknown backend {self.backend!r}")


def load_experiment_config(path: str | Path | None = None) -> list[ExperimentSpec]:
    """Load experiment specs from a JSON config, or the shipped matrix.

    Schema: {"experiments": [{"name", "text_source", "prompt",
    "context_length", "context_mode", "backend", "model"}, ...]}.
    Names must be unique.
    """
    if path is None:
        text = resources.files("textemo.data").joinpath(DEFAULT_MATRIX_RESOURCE).read_text("utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text)
    rows = data["experiments"] if isinstance(data, Mapping) else data
    specs = [ExperimentSpec(**row) for row in rows]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValueError("experiment names must be unique within a config")
    return specs


def validate_spec(spec: ExperimentSpec, corpus: Corpus, templates: Mapping[str, PromptTemplate]) -> None:
    if spec.prompt not in templates:
        raise ValueError(f"experiment {spec.name!r}: unknown template {spec.prompt!r}")
    if spec.text_source != "ensemble" and spec.text_source not in corpus.model_names():
        raise ValueError(f"experiment {spec.name!r}: unknown text source {spec.text_source!r}")


@dataclass
class PredictionEvent:
    """One prediction, as logged."""

    id: str
    fingerprint: str
    prediction: str
    raw_text: str
    from_cache: bool
    fallback: bool


@dataclass
class RunResult:
    """Everything a single experiment run produced."""

    spec: ExperimentSpec
    predictions: list[PredictionEvent]
    failures: list[dict]
    eval_report: EvalReport | None
    fallback_count: int
    cache_hits: int
    cache_misses: int

    @property
    def cache_hit_rate(self) -> float:
        total = self.cache_hits + self.cache_misses
        return self.cache_hits / total if total else 0.0


def _predict_one(
    corpus: Corpus,
    position: int,
    spec: ExperimentSpec,
    template: PromptTemplate,
    backend: MockBackend | HttpBackend,
    cache: CompletionCache | None,
    retry: RetryPolicy | None,
) -> PredictionEvent:
    record = corpus.records[position]
    window = build_context(
        corpus, position, mode=spec.context_mode, length=spec.context_length, text_source=spec.text_source
    )
    sentence = resolve_text(record, spec.text_source)
    prompt_text = render(template, format_context(window), record.speaker, sentence)
    request = CompletionRequest(model=spec.model, prompt=prompt_text, temperature=0.0, max_tokens=16)
    completion = complete(request, backend, cache=cache, retry=retry)
    label = completion.normalized_label
    return PredictionEvent(
        id=record.id.raw,
        fingerprint=request.fingerprint,
        prediction=label if label is not None else FALLBACK_LABEL,
        raw_text=completion.raw_text,
        from_cache=completion.from_cache,
        fallback=label is None,
    )


def run_experiment(
    spec: ExperimentSpec,
    corpus: Corpus,
    backend: MockBackend | HttpBackend,
    cache: CompletionCache | None = None,
    retry: RetryPolicy | None = None,
    template_file: str | Path | None = None,
    concurrency: int = 4,
    ua_definition: str = "macro-recall",
) -> RunResult:
    """Predict every need_prediction record and evaluate when truth exists."""
    templates = load_templates(template_file)
    validate_spec(spec, corpus, templates)
    template = templates[spec.prompt]

    targets = [rec.file_position for rec in corpus.records if rec.need_prediction]
    events: dict[int, PredictionEvent] = {}
    failures: list[dict] = []

    def work(position: int) -> tuple[int, PredictionEvent | None, dict | None]:
        record = corpus.records[position]
        try:
            return position, _predict_one(corpus, position, spec, template, backend, cache, retry), None
        except BackendError as exc:
            logger.error("record %s failed: %s", record.id.raw, exc)
            return position, None, {"id": record.id.raw, "fingerprint": exc.fingerprint, "error": str(exc)}

    if concurrency > 1 and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(work, targets))
    else:
        results = [work(p) for p in targets]

    for position, event, failure in results:
        if event is not None:
            events[position] = event
        elif failure is not None:
            failures.append(failure)

    ordered_positions = sorted(events)
    ordered = [events[p] for p in ordered_positions]
    fallback_count = sum(e.fallback for e in ordered)
    cache_hits = sum(e.from_cache for e in ordered)
    cache_misses = len(ordered) - cache_hits

    eval_report: EvalReport | None = None
    truth_pairs = [(corpus.records[p].emotion, events[p].prediction) for p in ordered_positions]
    if any(truth is not None for truth, _ in truth_pairs):
        try:
            eval_report = evaluate(truth_pairs, ua_definition=ua_definition)
        except EmptyInput:
            logger.warning("experiment %s: truth labels exist but none in the target set", spec.name)

    return RunResult(
        spec=spec,
        predictions=ordered,
        failures=failures,
        eval_report=eval_report,
        fallback_count=fallback_count,
        cache_hits=cache_hits,
        cache_misses=cache_misses,
    )


def write_run_artifacts(result: RunResult, out_dir: str | Path) -> dict[str, Path]:
    """Write predictions, eval report, run log, and retry manifest.

    Returns the paths written, keyed by artifact name. Predictions and eval
    files are byte-stable across reruns of the same inputs.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    name = result.spec.name
    paths: dict[str, Path] = {}

    predictions_path = out / f"{name}.predictions.json"
    blob = json.dumps(
        [{"id": e.id, "prediction": e.prediction} for e in result.predictions],
        indent=2,
        sort_keys=True,
    )
    predictions_path.write_text(blob + "\n", encoding="utf-8")
    paths["predictions"] = predictions_path

    if result.eval_report is not None:
        eval_path = out / f"{name}.eval.json"
        eval_path.write_text(result.eval_report.to_json() + "\n", encoding="utf-8")
        paths["eval"] = eval_path

    log_path = out / f"{name}.log.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        for event in result.predictions:
            fh.write(
                json.dumps(
                    {
                        "event": "prediction",
                        "id": event.id,
                        "fingerprint": event.fingerprint,
                        "prediction": event.prediction,
                        "from_cache": event.from_cache,
                        "fallback": event.fallback,
                    },
                    sort_keys=True,
                )
                + "\n"
            )
        fh.write(
            json.dumps(
                {
                    "event": "summary",
                    "experiment": name,
                    "n_predictions": len(result.predictions),
                    "n_failures": len(result.failures),
                    "fallback_count": result.fallback_count,
                    "cache_hits": result.cache_hits,
                    "cache_misses": result.cache_misses,
                    "cache_hit_rate": result.cache_hit_rate,
                },
                sort_keys=True,
            )
            + "\n"
        )
    paths["log"] = log_path

    if result.failures:
        retry_path = out / f"{name}.retry.json"
        retry_path.write_text(json.dumps(result.failures, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        paths["retry"] = retry_path
    return paths


def run_matrix(
    specs: list[ExperimentSpec],
    corpus: Corpus,
    cache: CompletionCache | None = None,
    out_dir: str | Path | None = None,
    retry: RetryPolicy | None = None,
    template_file: str | Path | None = None,
    concurrency: int = 4,
    mock_seed: int = 0,
    ua_definition: str = "macro-recall",
) -> list[dict]:
    """Run every spec sequentially against a shared cache.

    A failing row is reported with its error and does not abort the rest.
    Returns one comparison row per spec: per-class F1 and UA.
    """
    rows: list[dict] = []
    for spec in specs:
        try:
            backend = MockBackend(seed=mock_seed) if spec.backend == "mock" else HttpBackend()
            result = run_experiment(
                spec,
                corpus,
                backend,
                cache=cache,
                retry=retry,
                template_file=template_file,
                concurrency=concurrency,
                ua_definition=ua_definition,
            )
            if out_dir is not None:
                write_run_artifacts(result, out_dir)
            row: dict = {"name": spec.name, "n_predictions": len(result.predictions)}
            if result.eval_report is not None:
                row["ua"] = result.eval_report.ua
                for label, f1 in result.eval_report.per_class_f1.items():
                    row[f"f1_{label}"] = f1
            if result.failures:
                row["n_failures"] = len(result.failures)
            rows.append(row)
        except Exception as exc:  # a bad row must not sink the matrix
            logger.error("experiment %s failed: %s", spec.name, exc)
            rows.append({"name": spec.name, "error": str(exc)})
    return rows


def format_matrix_table(rows: list[dict]) -> str:
    header = f"{'experiment':<42}{'UA':>8}" + "".join(
        f"{'F1 ' + l:>12}" for l in ("neutral", "sad", "happy", "angry")
    )
    lines = [header]
    for row in rows:
        if "error" in row:
            lines.append(f"{row['name']:<42}  ERROR: {row['error']}")
            continue
        ua = f"{row['ua']:.3f}" if "ua" in row else "-"
        cells = "".join(
            f"{row.get('f1_' + l, float('nan')):>12.3f}" if ("f1_" + l) in row else f"{'-':>12}"
            for l in ("neutral", "sad", "happy", "angry")
        )
        lines.append(f"{row['name']:<42}{ua:>8}" + cells)
    return "\n".join(lines)
