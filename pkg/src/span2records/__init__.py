"""Convert OpenTelemetry traces into Kieker operation-execution records,
reconstruct execution traces from them and aggregate call trees and
dependency graphs.
"""

from .analysis import (
    AggregatedCallTree,
    DependencyGraph,
    Execution,
    ExecutionTrace,
    InvalidSynchronousTrace,
    build_call_tree,
    build_dependency_graph,
    emit_dot,
    reconstruct_trace,
)
from .convert import (
    ConversionReport,
    assign_eoi_ess,
    derive_hostname,
    derive_kieker_trace_id,
    is_synchronous,
    map_span_fields,
)
from .generator import GeneratorSpec, generate, spans_to_otlp_request, write_otlp_json
from .otlp import MalformedPayload, load_otlp_file, parse_otlp_json, parse_otlp_protobuf
from .receiver import TraceBuffer, TraceReceiver, serve_receiver
from .records import (
    MonitoringLog,
    OperationExecutionRecord,
    read_monitoring_log,
    write_monitoring_log,
)
from .spans import (
    InvalidSpan,
    OtelSpan,
    SpanEvent,
    SpanForest,
    SpanKind,
    SpanNode,
    build_span_forest,
    validate_span,
)

__version__ = "0.1.0"

__all__ = [
    "AggregatedCallTree",
    "ConversionReport",
    "DependencyGraph",
    "Execution",
    "ExecutionTrace",
    "GeneratorSpec",
    "InvalidSpan",
    "InvalidSynchronousTrace",
    "MalformedPayload",
    "MonitoringLog",
    "OperationExecutionRecord",
    "OtelSpan",
    "SpanEvent",
    "SpanForest",
    "SpanKind",
    "SpanNode",
    "TraceBuffer",
    "TraceReceiver",
    "assign_eoi_ess",
    "build_call_tree",
    "build_dependency_graph",
    "build_span_forest",
    "derive_hostname",
    "derive_kieker_trace_id",
    "emit_dot",
    "generate",
    "is_synchronous",
    "load_otlp_file",
    "map_span_fields",
    "parse_otlp_json",
    "parse_otlp_protobuf",
    "read_monitoring_log",
    "reconstruct_trace",
    "serve_receiver",
    "spans_to_otlp_request",
    "validate_span",
    "write_monitoring_log",
    "write_otlp_json",
]
