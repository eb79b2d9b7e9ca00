"""Command-line entry point wiring the pipeline together.

Subcommands: ``convert`` (OTLP file to monitoring log), ``receive`` (OTLP/HTTP
listener converting each completed trace), ``analyze`` (monitoring log to
call-tree / dependency-graph DOT files) and ``generate`` (synthetic OTLP
JSON). Exit codes: 0 success, 1 usage error, 2 data error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from .analysis import (
    InvalidSynchronousTrace,
    build_call_tree,
    build_dependency_graph,
    emit_dot,
    reconstruct_trace,
)
from .convert import ConversionReport, assign_eoi_ess
from .generator import PATTERNS, GeneratorSpec, generate, write_otlp_json
from .otlp import MalformedPayload, load_otlp_file
from .records import (
    MonitoringLogError,
    MonitoringLogWriter,
    OperationExecutionRecord,
    read_monitoring_log,
    write_monitoring_log,
)
from .receiver import DEFAULT_COMPLETION_TIMEOUT, serve_receiver
from .spans import InvalidSpan, OtelSpan, build_span_forest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_IO = 3

_LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO, "warn": logging.WARNING}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise _UsageError(message)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return value


def _listen_address(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise argparse.ArgumentTypeError("expected <host>:<port>")
    return host or "127.0.0.1", int(port)


def _build_parser() -> _Parser:
    parser = _Parser(
        prog="span2records",
        description="Convert OpenTelemetry traces into Kieker operation-execution "
        "records and analyze them.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    convert = sub.add_parser("convert", help="convert an OTLP file into a monitoring log")
    convert.add_argument("--input", required=True, help="OTLP file (.json or .binpb)")
    convert.add_argument("--output", required=True, help="monitoring-log directory to write")
    convert.set_defaults(func=_cmd_convert)

    receive = sub.add_parser("receive", help="receive OTLP/HTTP exports and convert them")
    receive.add_argument("--listen", required=True, type=_listen_address, metavar="HOST:PORT")
    receive.add_argument("--output", required=True, help="monitoring-log directory to append to")
    receive.add_argument(
        "--completion-timeout",
        type=float,
        default=DEFAULT_COMPLETION_TIMEOUT,
        metavar="SECONDS",
        help="quiet period after which a trace counts as complete (default %(default)s)",
    )
    receive.set_defaults(func=_cmd_receive)

    analyze = sub.add_parser("analyze", help="reconstruct traces and emit DOT analyses")
    analyze.add_argument("--input", required=True, help="monitoring-log directory to read")
    analyze.add_argument(
        "--asynchronousTrace",
        action="store_true",
        dest="asynchronous",
        help="infer parents by time containment instead of strict stack replay",
    )
    analyze.add_argument("--calltree", metavar="FILE.dot", help="write the aggregated call tree")
    analyze.add_argument("--deps", metavar="FILE.dot", help="write the hostname dependency graph")
    analyze.set_defaults(func=_cmd_analyze)

    gen = sub.add_parser("generate", help="write a synthetic OTLP JSON export request")
    gen.add_argument("--pattern", required=True, choices=PATTERNS)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--size", type=_positive_int, default=None, help="pattern size parameter")
    gen.add_argument("--output", required=True, metavar="FILE.json")
    gen.set_defaults(func=_cmd_generate)
    return parser


def _configure_logging() -> None:
    level = _LOG_LEVELS.get(os.environ.get("SPAN2RECORDS_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level, format="%(levelname)s %(name)s: %(message)s")


def run(argv: list[str]) -> int:
    """Parse arguments, dispatch and map failures to the exit-code contract."""
    _configure_logging()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InvalidSynchronousTrace as exc:
        print(f"error: not a synchronous trace: {exc}", file=sys.stderr)
        print(
            "hint: the trace contains overlapping executions; rerun with --asynchronousTrace",
            file=sys.stderr,
        )
        return EXIT_DATA
    except (MalformedPayload, MonitoringLogError, InvalidSpan, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def _report_line(report: ConversionReport) -> str:
    mode = "sync" if report.synchronous else "async"
    return f"{report.trace_id} {report.kieker_trace_id} {report.span_count} {mode}"


def _convert_spans(spans: list[OtelSpan]) -> tuple[list[OperationExecutionRecord], list[ConversionReport]]:
    records: list[OperationExecutionRecord] = []
    reports: list[ConversionReport] = []
    for forest in build_span_forest(spans):
        trace_records, report = assign_eoi_ess(forest)
        records.extend(trace_records)
        reports.append(report)
    return records, reports


def _cmd_convert(args: argparse.Namespace) -> int:
    spans = load_otlp_file(args.input)
    records, reports = _convert_spans(spans)
    write_monitoring_log(records, args.output)
    logger.info("converted %d traces (%d records) from %s", len(reports), len(records), args.input)
    for report in reports:
        print(_report_line(report))
    return EXIT_OK


def _cmd_receive(args: argparse.Namespace) -> int:
    writer = MonitoringLogWriter(args.output)
    stop = threading.Event()

    def handle_signal(signum: int, frame: object) -> None:
        stop.set()

    signal.signal(signal.SIGTERM, handle_signal)
    signal.signal(signal.SIGINT, handle_signal)

    def sink(trace_id: str, spans: list[OtelSpan]) -> None:
        records, reports = _convert_spans(spans)
        writer.append(records)
        for report in reports:
            print(_report_line(report), flush=True)

    try:
        serve_receiver(
            args.listen, sink, completion_timeout=args.completion_timeout, stop_event=stop
        )
    finally:
        writer.close()
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    records = read_monitoring_log(args.input)
    grouped: dict[int, list[OperationExecutionRecord]] = {}
    for record in records:
        grouped.setdefault(record.trace_id, []).append(record)
    traces = []
    for trace_records in grouped.values():
        trace_records.sort(key=lambda r: r.eoi)
        traces.append(reconstruct_trace(trace_records, asynchronous=args.asynchronous))
    if args.calltree:
        Path(args.calltree).write_text(
            emit_dot(build_call_tree(traces)), encoding="utf-8", newline="\n"
        )
    if args.deps:
        Path(args.deps).write_text(
            emit_dot(build_dependency_graph(traces)), encoding="utf-8", newline="\n"
        )
    total = sum(len(t.executions) for t in traces)
    print(f"analyzed {len(traces)} traces ({total} executions)")
    return EXIT_OK


def _cmd_generate(args: argparse.Namespace) -> int:
    spec = GeneratorSpec(pattern=args.pattern, seed=args.seed)
    if args.size is not None:
        if args.pattern in ("sequential", "fanout"):
            spec.children = args.size
        elif args.pattern == "nested":
            spec.depth = args.size
        elif args.pattern == "random":
            spec.span_count = args.size
        # fig3 is a fixed shape; --size is ignored
    spans = generate(spec)
    write_otlp_json(spans, args.output)
    print(f"wrote {len(spans)} spans to {args.output}")
    return EXIT_OK


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
