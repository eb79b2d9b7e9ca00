"""Mapping of span fields onto operation-execution records.

Timestamps and the span name carry over directly (tin, tout, signature);
the hostname comes from semantic-convention attributes. The parent links of
a span forest are flattened into an execution order index (eoi, position in
start-timestamp order) and an execution stack size (ess, depth in the
forest). Traces whose executions overlap in time cannot be replayed through
a synchronous call stack, so each converted trace is marked synchronous or
asynchronous instead of being rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

from .records import OperationExecutionRecord
from .spans import OtelSpan, SpanForest, SpanNode

UNKNOWN_HOST = "unknown-host"
UNNAMED_SIGNATURE = "<unnamed>"

_HOSTNAME_SOURCES = (
    ("attributes", "net.peer.name"),
    ("attributes", "net.sock.peer.addr"),
    ("resource_attributes", "service.name"),
)


@dataclass(slots=True)
class ConversionReport:
    """Per-trace summary of one conversion run."""

    trace_id: str
    kieker_trace_id: int
    span_count: int
    synchronous: bool
    orphan_count: int


@dataclass(slots=True)
class MappedFields:
    """Directly mapped record fields of a single span."""

    signature: str
    hostname: str
    tin: int
    tout: int


def derive_kieker_trace_id(otel_trace_id: str) -> int:
    """Reduce a 128-bit hex trace id to the signed 64-bit Kieker trace id.

    Takes the low-order 64 bits and reinterprets them as two's complement,
    so the result is deterministic and reversible at small scale.
    """
    value = int(otel_trace_id[-16:], 16)
    return value - (1 << 64) if value >= (1 << 63) else value


def derive_hostname(
    attributes: dict[str, str | int | float | bool],
    resource_attributes: dict[str, str | int | float | bool],
) -> str:
    """Pick the hostname from semantic-convention attributes.

    Precedence: span attribute ``net.peer.name``, span attribute
    ``net.sock.peer.addr``, resource attribute ``service.name``, then the
    literal ``unknown-host``. Empty values count as absent.
    """
    sources = {"attributes": attributes, "resource_attributes": resource_attributes}
    for source_name, key in _HOSTNAME_SOURCES:
        value = sources[source_name].get(key)
        if value is not None and str(value) != "":
            return str(value)
    return UNKNOWN_HOST


def map_span_fields(span: OtelSpan) -> MappedFields:
    """Rename span fields to their record counterparts.

    tin/tout are the start/end timestamps, the signature is the span name
    (or ``<unnamed>`` for empty names). Span events have no record target
    and are dropped.
    """
    return MappedFields(
        signature=span.name if span.name else UNNAMED_SIGNATURE,
        hostname=derive_hostname(span.attributes, span.resource_attributes),
        tin=span.start_epoch_nanos,
        tout=span.end_epoch_nanos,
    )


def is_synchronous(forest: SpanForest) -> bool:
    """True iff the forest could have been produced by one synchronous stack.

    Requires a single root, every child interval contained in its parent's
    interval, and pairwise disjoint sibling intervals (shared endpoints are
    allowed: a call may start the instant its predecessor returns).
    """
    if len(forest.roots) != 1:
        return False
    return _nested_and_disjoint(forest.roots[0])


def _nested_and_disjoint(node: SpanNode) -> bool:
    for child in node.children:
        if child.span.start_epoch_nanos < node.span.start_epoch_nanos:
            return False
        if child.span.end_epoch_nanos > node.span.end_epoch_nanos:
            return False
    # children are sorted by start, so adjacent disjointness covers all pairs
    for left, right in zip(node.children, node.children[1:]):
        if right.span.start_epoch_nanos < left.span.end_epoch_nanos:
            return False
    return all(_nested_and_disjoint(child) for child in node.children)


def assign_eoi_ess(forest: SpanForest) -> tuple[list[OperationExecutionRecord], ConversionReport]:
    """Convert one span forest into records with eoi/ess control flow.

    All spans are enumerated in ascending (start_epoch_nanos, span_id)
    order; eoi is the position in that order and ess the forest depth of
    the span. Asynchrony is reported, never fatal.
    """
    entries = sorted(
        forest.iter_with_depth(),
        key=lambda pair: (pair[0].span.start_epoch_nanos, pair[0].span.span_id),
    )
    kieker_trace_id = derive_kieker_trace_id(forest.trace_id)
    records = []
    for eoi, (node, depth) in enumerate(entries):
        mapped = map_span_fields(node.span)
        records.append(
            OperationExecutionRecord(
                operation_signature=mapped.signature,
                trace_id=kieker_trace_id,
                tin=mapped.tin,
                tout=mapped.tout,
                hostname=mapped.hostname,
                eoi=eoi,
                ess=depth,
                logging_timestamp=mapped.tout,
            )
        )
    report = ConversionReport(
        trace_id=forest.trace_id,
        kieker_trace_id=kieker_trace_id,
        span_count=len(records),
        synchronous=is_synchronous(forest),
        orphan_count=forest.orphan_count,
    )
    return records, report
