"""Command-line entry points for the batch workflow.

Subcommands mirror the pipeline stages: validate, wer, refine, run, matrix,
evaluate, plus gen-fixture for synthetic test corpora.

Exit codes: 0 success, 1 validation/eval failure, 2 I/O error, 3 backend
exhaustion.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import fixtures, metrics
from . import refine as refine_mod
from . import wer as wer_mod
from .experiments import (
    ExperimentSpec,
    format_matrix_table,
    load_experiment_config,
    run_experiment,
    run_matrix,
    write_run_artifacts,
)
from .llm import AuthError, BackendError, CompletionCache, HttpBackend, MockBackend

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_IO = 2
EXIT_BACKEND = 3


def _make_backend(args: argparse.Namespace) -> MockBackend | HttpBackend:
    if args.backend == "mock":
        return MockBackend(seed=args.mock_seed)
    kwargs = {}
    if args.endpoint:
        kwargs["endpoint"] = args.endpoint
    return HttpBackend(**kwargs)


def _make_cache(args: argparse.Namespace) -> CompletionCache | None:
    return CompletionCache(args.cache_dir) if args.cache_dir else None


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--backend", choices=["http", "mock"], default="mock")
    parser.add_argument("--model", default="gpt-3.5-turbo", help="annotator model name")
    parser.add_argument("--endpoint", default=None, help="chat-completions URL (http backend)")
    parser.add_argument("--cache-dir", default=None, help="completion cache directory")
    parser.add_argument("--concurrency", type=int, default=4)
    parser.add_argument("--mock-seed", type=int, default=0)


def cmd_validate(args: argparse.Namespace) -> int:
    try:
        objects = corpus_mod.read_objects(args.corpus)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except corpus_mod.SchemaError as exc:
        print(f"violation: {exc}")
        return EXIT_FAILED

    violations = []
    for position, obj in enumerate(objects):
        try:
            corpus_mod.record_from_object(obj, position, strict=True)
        except corpus_mod.SchemaError as exc:
            violations.append(str(exc))
    for violation in violations:
        print(f"violation: {violation}")
    if violations:
        print(f"{len(violations)} violation(s) in {len(objects)} record(s)")
        return EXIT_FAILED
    corpus_mod.build_corpus(objects, strict=True)  # surfaces non-contiguity warnings
    print(f"ok: {len(objects)} record(s)")
    return EXIT_OK


def cmd_wer(args: argparse.Namespace) -> int:
    try:
        corpus = corpus_mod.load_corpus(args.corpus, strict=args.strict)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except corpus_mod.SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    report = wer_mod.wer_report(corpus)
    print(report.format_table())
    if report.skipped:
        print(f"skipped: {report.skipped}")
    if args.wer_out:
        Path(args.wer_out).write_text(report.to_csv(), encoding="utf-8")
        print(f"wrote {args.wer_out}")
    return EXIT_OK


def cmd_refine(args: argparse.Namespace) -> int:
    try:
        objects = corpus_mod.read_objects(args.infile)
        corpus = corpus_mod.build_corpus(objects, strict=args.strict)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except corpus_mod.SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_FAILED

    cfg = refine_mod.RefinementConfig(
        min_length=args.min_length,
        length_unit="characters" if args.unit == "chars" else "tokens",
        selector="llm" if args.selector == "llm" else "longest_only",
        model_priority=args.model_priority.split(",") if args.model_priority else [],
    )
    backend = _make_backend(args) if cfg.selector == "llm" else None
    cache = _make_cache(args)

    def refine_one(record):
        try:
            return refine_mod.refine_record(record, cfg, backend=backend, cache=cache, llm_model=args.model), None
        except AuthError:
            raise
        except BackendError as exc:
            logger.error("record %s left unrefined: %s", record.id.raw, exc)
            return None, record.id.raw

    concurrency = getattr(args, "concurrency", 1)
    if cfg.selector == "llm" and concurrency > 1 and len(corpus.records) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            results = list(pool.map(refine_one, corpus.records))
    else:
        results = [refine_one(record) for record in corpus.records]

    # single-threaded write-back merge, in file order
    unrefined: list[str] = []
    for obj, (outcome, failed_id) in zip(objects, results):
        if outcome is not None:
            obj["ensemble"] = outcome.chosen
        else:
            unrefined.append(failed_id)

    Path(args.outfile).write_text(
        json.dumps(objects, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    refined = len(corpus.records) - len(unrefined)
    print(f"refined {refined}/{len(corpus.records)} record(s) -> {args.outfile}")
    if unrefined:
        print(f"unrefined after retries: {unrefined}", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        corpus = corpus_mod.load_corpus(args.corpus, strict=args.strict)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except corpus_mod.SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_FAILED

    spec = ExperimentSpec(
        name=args.name,
        text_source=args.text_source,
        prompt=args.prompt,
        context_length=args.context_length,
        context_mode=args.context_mode,
        backend=args.backend,
        model=args.model,
    )
    try:
        result = run_experiment(
            spec,
            corpus,
            _make_backend(args),
            cache=_make_cache(args),
            template_file=args.template_file,
            concurrency=args.concurrency,
            ua_definition=args.ua_definition,
        )
    except AuthError as exc:
        print(f"auth error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED

    paths = write_run_artifacts(result, args.out_dir)
    print(
        f"{len(result.predictions)} prediction(s), fallback_count={result.fallback_count}, "
        f"cache_hit_rate={result.cache_hit_rate:.2f}"
    )
    if result.eval_report is not None:
        print(result.eval_report.format_table())
    for kind, path in paths.items():
        print(f"wrote {kind}: {path}")
    if result.failures:
        print(f"{len(result.failures)} request(s) failed; see retry manifest", file=sys.stderr)
        return EXIT_BACKEND
    return EXIT_OK


def cmd_matrix(args: argparse.Namespace) -> int:
    try:
        specs = load_experiment_config(args.config)
        corpus = corpus_mod.load_corpus(args.corpus, strict=args.strict)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (corpus_mod.SchemaError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED

    rows = run_matrix(
        specs,
        corpus,
        cache=_make_cache(args),
        out_dir=args.out_dir,
        template_file=args.template_file,
        concurrency=args.concurrency,
        mock_seed=args.mock_seed,
        ua_definition=args.ua_definition,
    )
    print(format_matrix_table(rows))
    if args.out_dir:
        summary = Path(args.out_dir) / "matrix.json"
        summary.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        print(f"wrote {summary}")
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    try:
        corpus = corpus_mod.load_corpus(args.corpus, strict=args.strict)
        predictions = json.loads(Path(args.predictions).read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (corpus_mod.SchemaError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED

    by_id = {rec.id.raw: rec for rec in corpus.records}
    pairs: list[tuple[str | None, str]] = []
    missing = 0
    for entry in predictions:
        rec = by_id.get(entry["id"])
        if rec is None:
            missing += 1
            continue
        pairs.append((rec.emotion, entry["prediction"]))
    if missing:
        print(f"warning: {missing} prediction id(s) not in corpus", file=sys.stderr)
    try:
        report = metrics.evaluate(pairs, ua_definition=args.ua_definition)
    except (metrics.EmptyInput, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    print(report.format_table())
    if args.eval_out:
        Path(args.eval_out).write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"wrote {args.eval_out}")
    return EXIT_OK


def cmd_gen_fixture(args: argparse.Namespace) -> int:
    objects = fixtures.generate_corpus(
        seed=args.seed,
        n_records=args.records,
        need_prediction_rate=args.need_prediction_rate,
        short_rate=args.short_rate,
    )
    fixtures.write_corpus(objects, args.out)
    print(f"wrote {len(objects)} record(s) to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="textemo", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="strict-mode schema and id-grammar check")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("wer", help="per-model, per-emotion WER report")
    p.add_argument("corpus")
    p.add_argument("--strict", action="store_true")
    p.add_argument("--wer-out", default=None, help="write the report as CSV")
    p.set_defaults(func=cmd_wer)

    p = sub.add_parser("refine", help="add the refined 'ensemble' transcription")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--selector", choices=["llm", "longest"], default="llm")
    p.add_argument("--min-length", type=int, default=refine_mod.DEFAULT_MIN_LENGTH)
    p.add_argument("--unit", choices=["chars", "tokens"], default="chars")
    p.add_argument("--model-priority", default=None, help="comma-separated tie-break order")
    p.add_argument("--strict", action="store_true")
    _add_backend_args(p)
    p.set_defaults(func=cmd_refine)

    p = sub.add_parser("run", help="predict emotions for one experiment")
    p.add_argument("corpus")
    p.add_argument("--name", default="run")
    p.add_argument("--text-source", required=True, help="ASR model name or 'ensemble'")
    p.add_argument("--prompt", default="baseline")
    p.add_argument("--template-file", default=None)
    p.add_argument("--context-length", type=int, default=3)
    p.add_argument("--context-mode", choices=["session", "script"], default="session")
    p.add_argument("--out-dir", default="runs")
    p.add_argument("--ua-definition", choices=["macro-recall", "micro"], default="macro-recall")
    p.add_argument("--strict", action="store_true")
    _add_backend_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("matrix", help="run a config of experiments and compare")
    p.add_argument("corpus")
    p.add_argument("--config", default=None, help="experiments JSON (default: shipped matrix)")
    p.add_argument("--template-file", default=None)
    p.add_argument("--out-dir", default=None)
    p.add_argument("--ua-definition", choices=["macro-recall", "micro"], default="macro-recall")
    p.add_argument("--strict", action="store_true")
    _add_backend_args(p)
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("evaluate", help="score a predictions file against corpus labels")
    p.add_argument("--predictions", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--ua-definition", choices=["macro-recall", "micro"], default="macro-recall")
    p.add_argument("--eval-out", default=None)
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("gen-fixture", help="write a seeded synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--records", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--need-prediction-rate", type=float, default=0.6)
    p.add_argument("--short-rate", type=float, default=0.15)
    p.set_defaults(func=cmd_gen_fixture)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except AuthError as exc:
        print(f"auth error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
