"""Command-line interface: ``measex <subcommand> ...``.

Exit codes: 0 on success, 1 when the data is invalid or lint finds errors,
2 on usage errors and missing files.
"""
import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

from measex.analysis import attribute_report, krippendorff_alpha, read_coder_annotations
from measex.analysis import vocab_overlap
from measex.config import Config, load_config
from measex.corpus import (
    convert_source_corpus,
    corpus_statistics,
    load_mapping_table,
    read_corpus,
    read_source_annotations,
    write_corpus,
)
from measex.lint import findings_to_jsonl, has_errors, lint_corpus
from measex.model import EntityClass
from measex.pipeline import (
    extract_corpus,
    frames_to_predictions,
    make_tagger,
    write_predictions,
)
from measex.scoring import MODES, STRATEGIES, score_confidence_interval, score_corpus
from measex.tagging import export_training_file

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DATA = 1
EXIT_USAGE = 2


def _emit(text: str, output: Optional[str]) -> None:
    if output is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
        return
    with open(output, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(text if text.endswith("\n") else text + "\n")
    logger.info("Wrote %s", output)


def _workers(args, config: Config) -> int:
    return config.workers if args.workers is None else args.workers


def cmd_convert(args, config: Config) -> int:
    table = load_mapping_table(args.mapping or config.mapping_table)
    records = read_source_annotations(args.input)
    docs = convert_source_corpus(
        records,
        table,
        domain=args.domain,
        split=args.split,
        segment=not args.no_segment,
        abbreviations=config.abbreviation_list(),
    )
    write_corpus(docs, args.output)
    return EXIT_OK


def cmd_export_tags(args, config: Config) -> int:
    count = export_training_file(read_corpus(args.corpus), args.task, args.output)
    logger.info("Exported %d task %d samples to %s", count, args.task, args.output)
    return EXIT_OK


def cmd_extract(args, config: Config) -> int:
    docs = read_corpus(args.corpus)
    gold = docs if "oracle" in (args.task1, args.task2) else None
    task1 = make_tagger(args.task1, 1, config, gold)
    task2 = make_tagger(args.task2, 2, config, gold)
    predicted = extract_corpus(docs, task1, task2, _workers(args, config))
    if args.format == "corpus":
        write_corpus(predicted, args.output)
    else:
        write_predictions(
            (record for doc in predicted for record in frames_to_predictions(doc, doc.frames)),
            args.output,
        )
    return EXIT_OK


def cmd_score(args, config: Config) -> int:
    gold = read_corpus(args.gold)
    pred = read_corpus(args.pred)
    mode = args.mode or config.scoring_mode
    report = score_corpus(gold, pred, mode, args.strategy, _workers(args, config))
    text = report.to_json() if args.json else report.to_table()
    if args.ci:
        intervals = score_confidence_interval(
            gold,
            pred,
            interval=args.interval,
            bootstraps=args.bootstraps,
            random_state=config.random_state,
            strategy=args.strategy,
        )
        if args.json:
            payload = json.loads(text)
            payload["intervals"] = intervals.to_dict(orient="records")
            text = json.dumps(payload, indent=2)
        else:
            text += "\n\nBootstrap intervals (strict F1)\n" + intervals.to_string(
                index=False, float_format="{:.3f}".format
            )
    _emit(text, args.output)
    return EXIT_OK


def cmd_analyze(args, config: Config) -> int:
    report = attribute_report(
        read_corpus(args.gold), read_corpus(args.pred), _workers(args, config)
    )
    if args.output is not None and Path(args.output).suffix == ".csv":
        report.to_csv(args.output, index=False)
        logger.info("Wrote %s", args.output)
    else:
        _emit(report.to_string(index=False, float_format="{:.3f}".format), args.output)
    return EXIT_OK


def cmd_iaa(args, config: Config) -> int:
    coders, texts = read_coder_annotations(args.coders)
    classes = list(EntityClass) if args.per_class else []
    alpha = krippendorff_alpha(coders, texts, classes)
    _emit(alpha.to_frame().to_string(float_format="{:.4f}".format), args.output)
    return EXIT_OK


def _corpus_labels(paths):
    # file stems, or the full path where two stems coincide
    stems = Counter(Path(path).stem for path in paths)
    return [Path(path).stem if stems[Path(path).stem] == 1 else path for path in paths]


def cmd_overlap(args, config: Config) -> int:
    paths = [path for path in args.corpora.split(",") if path]
    corpora = [(label, read_corpus(path)) for label, path in zip(_corpus_labels(paths), paths)]
    blocks = []
    for k in args.top_k or [config.top_k]:
        matrix = vocab_overlap(corpora, k)
        blocks.append(f"top-{k}\n" + matrix.to_string(float_format="{:.3f}".format))
    _emit("\n\n".join(blocks), args.output)
    return EXIT_OK


def cmd_lint(args, config: Config) -> int:
    findings = lint_corpus(
        read_corpus(args.corpus), config.stoplist_sets(), _workers(args, config)
    )
    _emit(findings_to_jsonl(findings), args.output)
    errors = sum(finding.severity == "error" for finding in findings)
    logger.info("%d findings, %d errors", len(findings), errors)
    return EXIT_DATA if has_errors(findings) else EXIT_OK


def cmd_stats(args, config: Config) -> int:
    table = corpus_statistics(read_corpus(args.corpus))
    _emit(table.to_string(index=False, float_format="{:.3f}".format), args.output)
    return EXIT_OK


def _positive(value: str) -> int:
    number = int(value)
    if number < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return number


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="measex", description="Measurement and context extraction toolkit."
    )
    parser.add_argument("--config", help="JSON configuration file (overrides MEASEX_CONFIG)")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG"
    )
    parser.add_argument("--workers", type=_positive, help="threads for per-document work")
    commands = parser.add_subparsers(dest="command", required=True)

    convert = commands.add_parser("convert", help="source annotations to canonical corpus")
    convert.add_argument("--input", required=True)
    convert.add_argument("--mapping", help="mapping table (defaults to the configured one)")
    convert.add_argument("--output", required=True)
    convert.add_argument("--domain", default="msp")
    convert.add_argument("--split", default="unsplit")
    convert.add_argument(
        "--no-segment", action="store_true", help="keep each text as a single sentence"
    )
    convert.set_defaults(handler=cmd_convert)

    export = commands.add_parser("export-tags", help="token/tag training export")
    export.add_argument("--corpus", required=True)
    export.add_argument("--task", type=int, choices=(1, 2), required=True)
    export.add_argument("--output", required=True)
    export.set_defaults(handler=cmd_export_tags)

    extract = commands.add_parser("extract", help="run the two-step extraction pipeline")
    extract.add_argument("--corpus", required=True)
    extract.add_argument("--task1", default="rule", help="rule, oracle or file:<path>")
    extract.add_argument("--task2", default="lexicon", help="lexicon, oracle or file:<path>")
    extract.add_argument("--output", required=True)
    extract.add_argument(
        "--format",
        choices=("corpus", "predictions"),
        default="corpus",
        help="canonical corpus of predicted frames, or prediction interchange records",
    )
    extract.set_defaults(handler=cmd_extract)

    score = commands.add_parser("score", help="score predictions against gold")
    score.add_argument("--gold", required=True)
    score.add_argument("--pred", required=True)
    score.add_argument("--mode", choices=MODES)
    score.add_argument("--strategy", choices=STRATEGIES, default="greedy")
    fmt = score.add_mutually_exclusive_group()
    fmt.add_argument("--json", action="store_true")
    fmt.add_argument("--table", action="store_true", help="aligned text tables (default)")
    score.add_argument("--ci", action="store_true", help="add bootstrap intervals for F1")
    score.add_argument("--interval", type=float, default=95)
    score.add_argument("--bootstraps", type=_positive, default=1000)
    score.add_argument("--output")
    score.set_defaults(handler=cmd_score)

    analyze = commands.add_parser("analyze", help="entity attribute report")
    analyze.add_argument("--gold", required=True)
    analyze.add_argument("--pred", required=True)
    analyze.add_argument("--output", help="report file; .csv writes CSV")
    analyze.set_defaults(handler=cmd_analyze)

    iaa = commands.add_parser("iaa", help="Krippendorff's alpha between coders")
    iaa.add_argument("--coders", required=True, help="directory of <coder>.jsonl files")
    iaa.add_argument("--per-class", action="store_true")
    iaa.add_argument("--output")
    iaa.set_defaults(handler=cmd_iaa)

    overlap = commands.add_parser("overlap", help="top-k vocabulary overlap matrix")
    overlap.add_argument("--corpora", required=True, help="comma-separated corpus files")
    overlap.add_argument("--top-k", type=_positive, action="append")
    overlap.add_argument("--output")
    overlap.set_defaults(handler=cmd_overlap)

    lint = commands.add_parser("lint", help="check frames against the annotation guidelines")
    lint.add_argument("--corpus", required=True)
    lint.add_argument("--output")
    lint.set_defaults(handler=cmd_lint)

    stats = commands.add_parser("stats", help="corpus statistics")
    stats.add_argument("--corpus", required=True)
    stats.add_argument("--output")
    stats.set_defaults(handler=cmd_stats)
    return parser


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity > 1:
        level = logging.DEBUG
    logging.basicConfig(
        format="%(asctime)s %(levelname)-8s %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        level=level,
    )
    logging.captureWarnings(True)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    _configure_logging(args.verbose)

    try:
        config = load_config(args.config)
        return args.handler(args, config)
    except FileNotFoundError as exc:
        logger.error("%s", exc)
        return EXIT_USAGE
    except (KeyError, ValueError, TypeError) as exc:
        logger.error("%s: %s", type(exc).__name__, _message(exc))
        return EXIT_DATA


def _message(exc: Exception) -> str:
    if isinstance(exc, KeyError) and len(exc.args) == 1:
        return str(exc.args[0])
    return str(exc)


__all__ = ["build_parser", "main"]
