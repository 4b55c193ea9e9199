"""
Command-line front end: ``ingest``, ``score``, ``analyze``, ``explain``,
``validate``. Stages hand off through files in the output directory.

Exit codes: 0 success, 1 runtime or data failure, 2 usage or config error.
Summaries go to stdout as JSON; logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

from . import analytics, corpus_io, explain, llm_validate, scoring
from .config import ConfigError, PipelineConfig, builtin_lexicon_path

logger = logging.getLogger("abstract_sentiment")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2

CLEANED_CSV = "cleaned.csv"
SCORED_CSV = "scored.csv"


class UsageError(Exception):
    pass


class RunError(Exception):
    pass


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")


def _emit(summary: dict) -> None:
    print(json.dumps(summary, ensure_ascii=False))


def _backend(config: PipelineConfig) -> scoring.ScoringBackend:
    spec = config.backend_spec
    if spec == "lexicon:builtin":
        spec = f"lexicon:{builtin_lexicon_path()}"
    try:
        return scoring.backend_from_spec(spec, max_tokens=config.chunk_budget)
    except scoring.BackendSpecError as exc:
        raise UsageError(str(exc)) from exc


def _load_stage(path: Path, loader):
    if not path.exists():
        raise RunError(f"{path} not found; run the previous stage first")
    try:
        return loader(path)
    except corpus_io.CorpusError as exc:
        raise RunError(str(exc)) from exc


# -------------------------------------------------------------------------- commands


def cmd_ingest(config: PipelineConfig, args: argparse.Namespace) -> int:
    if not config.input_csv:
        raise UsageError("no input CSV given (input_csv / --input)")
    try:
        records, errors = corpus_io.load_corpus(config.input_csv, config.column_map)
    except corpus_io.CorpusError as exc:
        raise RunError(str(exc)) from exc
    kept, dropped = corpus_io.dedupe(records)
    config.out.mkdir(parents=True, exist_ok=True)
    corpus_io.write_corpus(kept, config.out / CLEANED_CSV)
    _write_json(
        config.out / "row_errors.json",
        {
            "row_errors": [asdict(e) for e in errors],
            "duplicates_dropped": [{"record_id": r.record_id, "title": r.title} for r in dropped],
        },
    )
    summary = {
        "rows_in": len(records) + len(errors),
        "accepted": len(records),
        "deduped": len(dropped),
        "kept": len(kept),
        "errors": len(errors),
    }
    _write_json(config.out / "ingest_summary.json", summary)
    _emit(summary)
    return EXIT_OK


def cmd_score(config: PipelineConfig, args: argparse.Namespace) -> int:
    backend = _backend(config)
    records, _ = _load_stage(config.out / CLEANED_CSV, corpus_io.load_corpus)
    results, failures = scoring.score_corpus(records, backend, parallelism=config.jobs)
    ok_ids = {r.record_id for r in results}
    corpus_io.write_scored_corpus(
        [r for r in records if r.record_id in ok_ids], results, config.out / SCORED_CSV
    )
    _write_json(config.out / "score_failures.json", [asdict(f) for f in failures])
    _emit({"scored": len(results), "failed": len(failures)})
    if failures and config.strict:
        logger.error("%d record(s) failed to score and --strict is set", len(failures))
        return EXIT_FAILURE
    return EXIT_OK


def cmd_analyze(config: PipelineConfig, args: argparse.Namespace) -> int:
    if config.trend_range is None:
        raise UsageError("a year range is required (trend_range / --year-from and --year-to)")
    records, scores = _load_stage(config.out / SCORED_CSV, corpus_io.load_scored_corpus)
    histogram = analytics.build_histogram(scores, n_bins=config.histogram_bins)
    trend = analytics.yearly_trend(records, scores, *config.trend_range)
    stats = analytics.journal_stats(records, scores, top_n=config.top_n_journals)
    paths = analytics.render_charts(
        histogram, trend, stats, config.out / "analysis", fmt=config.chart_format
    )
    _emit({"abstracts": len(scores), "files": [str(p) for p in paths]})
    return EXIT_OK


def cmd_explain(config: PipelineConfig, args: argparse.Namespace) -> int:
    backend = _backend(config)
    records, _ = _load_stage(config.out / CLEANED_CSV, corpus_io.load_corpus)
    by_id = {r.record_id: r for r in records}
    if args.record_id not in by_id:
        raise UsageError(f"unknown record_id {args.record_id} (corpus has {len(records)} records)")
    record = by_id[args.record_id]
    quantity = config.explained_quantity
    if args.samples is None:
        try:
            report = explain.attribute_exact(
                record.abstract, backend, quantity, record_id=record.record_id, jobs=config.jobs
            )
        except explain.TooManyWordsError as exc:
            raise UsageError(f"{exc}; use --samples instead") from exc
    else:
        report = explain.attribute_sampled(
            record.abstract,
            backend,
            quantity,
            samples=args.samples,
            seed=config.seed,
            record_id=record.record_id,
            jobs=config.jobs,
        )
    stem = config.out / "explain" / f"record_{record.record_id}"
    stem.parent.mkdir(parents=True, exist_ok=True)
    explain.write_report_json(report, stem.with_suffix(".json"))
    explain.render_attribution_html(report, record.abstract, stem.with_suffix(".html"))
    _emit(
        {
            "record_id": record.record_id,
            "method": report.method,
            "model_output": report.model_output,
            "additivity_gap": report.additivity_gap,
            "files": [str(stem.with_suffix(".json")), str(stem.with_suffix(".html"))],
        }
    )
    return EXIT_OK


def cmd_validate(config: PipelineConfig, args: argparse.Namespace) -> int:
    try:
        client = llm_validate.LlmClient(
            model=config.llm.model,
            cache=llm_validate.ResponseCache(config.cache_path),
            mode=config.llm.mode,
            endpoint=config.llm.endpoint,
            token_env=config.llm.token_env,
        )
    except llm_validate.LlmAuthError as exc:
        raise UsageError(str(exc)) from exc
    template = llm_validate.SENTIMENT_TEMPLATE
    if "sentiment_1_to_5" in config.prompts:
        try:
            template = llm_validate.PromptTemplate("sentiment_1_to_5", config.prompts["sentiment_1_to_5"])
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    records, scores = _load_stage(config.out / SCORED_CSV, corpus_io.load_scored_corpus)
    sample_size = args.sample_size if args.sample_size is not None else min(20, len(records))
    if not 1 <= sample_size <= len(records):
        raise UsageError(f"sample size must be in 1..{len(records)}")
    try:
        stats = llm_validate.cross_validate(
            records, scores, client, sample_size, config.seed, template=template, jobs=config.jobs
        )
    except llm_validate.LlmAuthError as exc:
        raise RunError(str(exc)) from exc
    payload = stats.to_dict()
    payload["model"] = config.llm.model
    payload["prompt_template"] = template.template_text
    _write_json(config.out / "validation.json", payload)
    logger.info("validate made %d network call(s)", client.network_calls)
    _emit(
        {
            "n": stats.n,
            "exact_match_rate": stats.exact_match_rate,
            "mean_absolute_star_error": stats.mean_absolute_star_error,
            "parse_failures": len(stats.parse_failures),
        }
    )
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "score": cmd_score,
    "analyze": cmd_analyze,
    "explain": cmd_explain,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML pipeline config")
    common.add_argument("--output-dir", help="directory for stage outputs")
    common.add_argument("--jobs", type=int, help="worker threads")
    common.add_argument("--seed", type=int)
    common.add_argument("--strict", action="store_true", default=None,
                        help="fail when any record cannot be scored")
    common.add_argument("--backend", dest="backend_spec",
                        help="'lexicon:<file>', 'lexicon:builtin' or 'transformer:<model-id>'")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="abstract-sentiment", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="load, validate and deduplicate a CSV corpus")
    p.add_argument("--input", dest="input_csv")

    sub.add_parser("score", parents=[common], help="score the cleaned corpus")

    p = sub.add_parser("analyze", parents=[common], help="histogram, yearly trend, journal stats")
    p.add_argument("--year-from", type=int)
    p.add_argument("--year-to", type=int)
    p.add_argument("--top-n", dest="top_n_journals", type=int)
    p.add_argument("--chart-format")

    p = sub.add_parser("explain", parents=[common], help="Shapley attributions for one record")
    p.add_argument("--record-id", type=int, required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", help="exact enumeration (default, <= 12 words)")
    mode.add_argument("--samples", type=int, help="permutation samples")
    p.add_argument("--quantity", dest="explained_quantity",
                   choices=("normalized_score", "probability_of_label"))

    p = sub.add_parser("validate", parents=[common], help="cross-check labels with an LLM")
    p.add_argument("--sample-size", type=int)
    p.add_argument("--llm-mode", choices=("live", "fixture"))
    p.add_argument("--llm-cache")
    return parser


OVERRIDES = (
    "output_dir", "jobs", "seed", "strict", "backend_spec", "input_csv",
    "top_n_journals", "chart_format", "explained_quantity",
)


def resolve_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    data = config.to_dict()
    for name in OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    year_from, year_to = getattr(args, "year_from", None), getattr(args, "year_to", None)
    if year_from is not None or year_to is not None:
        current = data["trend_range"] or [None, None]
        data["trend_range"] = [
            year_from if year_from is not None else current[0],
            year_to if year_to is not None else current[1],
        ]
        if None in data["trend_range"]:
            raise ConfigError("both --year-from and --year-to are needed")
    if getattr(args, "llm_mode", None):
        data["llm"]["mode"] = args.llm_mode
    if getattr(args, "llm_cache", None):
        data["llm"]["cache_path"] = args.llm_cache
    if getattr(args, "samples", None) is not None and args.samples < 1:
        raise ConfigError("--samples must be >= 1")
    return PipelineConfig.from_dict(data)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        config = resolve_config(args)
        return COMMANDS[args.command](config, args)
    except (UsageError, ConfigError) as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (RunError, llm_validate.LlmError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
