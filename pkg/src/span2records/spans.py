"""Domain model for OpenTelemetry spans and per-trace span forests."""

from __future__ import annotations

import logging
from collections.abc import Iterator
from dataclasses import dataclass, field
from enum import Enum

logger = logging.getLogger(__name__)

ZERO_TRACE_ID = "0" * 32
ZERO_SPAN_ID = "0" * 16

_HEX_DIGITS = frozenset("0123456789abcdef")


class SpanKind(str, Enum):
    """Role of a span within its trace, mirroring the OpenTelemetry kinds."""

    INTERNAL = "INTERNAL"
    SERVER = "SERVER"
    CLIENT = "CLIENT"
    PRODUCER = "PRODUCER"
    CONSUMER = "CONSUMER"


class InvalidSpan(ValueError):
    """Raised when a span violates the basic model invariants."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(slots=True)
class SpanEvent:
    """Point-in-time event attached to a span; preserved but never converted."""

    epoch_nanos: int
    name: str
    attributes: dict[str, object] = field(default_factory=dict)


@dataclass(slots=True)
class OtelSpan:
    """One OpenTelemetry span.

    Ids are canonical lowercase hex text: 32 chars for trace_id, 16 for
    span_id. An absent parent_span_id marks a root span. The name is the
    operation label and may be any text (an HTTP route, a method call, ...).
    """

    trace_id: str
    span_id: str
    name: str
    start_epoch_nanos: int
    end_epoch_nanos: int
    parent_span_id: str | None = None
    kind: SpanKind = SpanKind.INTERNAL
    attributes: dict[str, str | int | float | bool] = field(default_factory=dict)
    resource_attributes: dict[str, str | int | float | bool] = field(default_factory=dict)
    events: list[SpanEvent] = field(default_factory=list)


def _is_hex_id(value: str, length: int) -> bool:
    return len(value) == length and all(c in _HEX_DIGITS for c in value)


def validate_span(raw: OtelSpan) -> OtelSpan:
    """Check the model invariants and return the span unchanged when they hold.

    Raises:
        InvalidSpan: zero or malformed ids, self-parenting, or end < start.
    """
    if not _is_hex_id(raw.trace_id, 32):
        raise InvalidSpan(f"trace_id {raw.trace_id!r} is not 32 lowercase hex chars")
    if raw.trace_id == ZERO_TRACE_ID:
        raise InvalidSpan("trace_id is all zeros")
    if not _is_hex_id(raw.span_id, 16):
        raise InvalidSpan(f"span_id {raw.span_id!r} is not 16 lowercase hex chars")
    if raw.span_id == ZERO_SPAN_ID:
        raise InvalidSpan("span_id is zero")
    if raw.parent_span_id is not None:
        if not _is_hex_id(raw.parent_span_id, 16):
            raise InvalidSpan(f"parent_span_id {raw.parent_span_id!r} is not 16 lowercase hex chars")
        if raw.parent_span_id == raw.span_id:
            raise InvalidSpan("self parent")
    if raw.start_epoch_nanos < 0 or raw.end_epoch_nanos < 0:
        raise InvalidSpan("negative timestamp")
    if raw.end_epoch_nanos < raw.start_epoch_nanos:
        raise InvalidSpan("end before start")
    return raw


@dataclass(eq=False)
class SpanNode:
    """A span with its resolved children, ordered by (start, span_id)."""

    span: OtelSpan
    children: list[SpanNode] = field(default_factory=list)
    orphaned: bool = False


@dataclass(slots=True)
class SpanForest:
    """Parent-linked trees for all spans sharing one trace id.

    Spans whose parent reference could not be resolved are promoted to
    roots with ``orphaned`` set, so partial exports still convert.
    """

    trace_id: str
    roots: list[SpanNode] = field(default_factory=list)
    orphan_count: int = 0

    def iter_with_depth(self) -> Iterator[tuple[SpanNode, int]]:
        """Yield (node, depth) in preorder; roots have depth 0."""
        stack = [(root, 0) for root in reversed(self.roots)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            for child in reversed(node.children):
                stack.append((child, depth + 1))

    def iter_nodes(self) -> Iterator[SpanNode]:
        for node, _ in self.iter_with_depth():
            yield node

    @property
    def span_count(self) -> int:
        return sum(1 for _ in self.iter_nodes())


def build_span_forest(spans: list[OtelSpan]) -> list[SpanForest]:
    """Group spans by trace id and resolve parent links into forests.

    Orphans (parent id set but unknown in the trace) become roots and are
    counted. A parent link that would close a cycle is rejected and the
    linking span is promoted to an orphan root, so construction never hangs.
    Children end up sorted by (start_epoch_nanos, span_id).
    """
    by_trace: dict[str, list[OtelSpan]] = {}
    for span in spans:
        by_trace.setdefault(span.trace_id, []).append(span)
    return [_assemble(trace_id, group) for trace_id, group in by_trace.items()]


def _assemble(trace_id: str, group: list[OtelSpan]) -> SpanForest:
    ordered = sorted(group, key=lambda s: (s.start_epoch_nanos, s.span_id))
    nodes = [SpanNode(span=s) for s in ordered]
    by_id: dict[str, SpanNode] = {node.span.span_id: node for node in nodes}
    parent_of: dict[SpanNode, SpanNode] = {}
    forest = SpanForest(trace_id=trace_id)
    for node in nodes:
        pid = node.span.parent_span_id
        target = by_id.get(pid) if pid is not None else None
        if target is None or target is node:
            node.orphaned = pid is not None
            if node.orphaned:
                forest.orphan_count += 1
            forest.roots.append(node)
            continue
        if _links_back(node, target, parent_of):
            logger.warning(
                "trace %s: span %s -> parent %s closes a cycle, promoting to orphan root",
                trace_id, node.span.span_id, pid,
            )
            node.orphaned = True
            forest.orphan_count += 1
            forest.roots.append(node)
            continue
        target.children.append(node)
        parent_of[node] = target
    return forest


def _links_back(node: SpanNode, target: SpanNode, parent_of: dict[SpanNode, SpanNode]) -> bool:
    """True if node is already an ancestor of target (the link would cycle)."""
    current: SpanNode | None = target
    while current is not None:
        if current is node:
            return True
        current = parent_of.get(current)
    return False
