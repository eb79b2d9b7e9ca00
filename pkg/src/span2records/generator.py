"""Deterministic OTLP span generators for tests and desk-scale demos.

Patterns:
    sequential  one root with n disjoint children (synchronous)
    nested      a call chain of the given depth (synchronous)
    fanout      one root with n mutually overlapping children (asynchronous)
    fig3        a fixed 5-span shape with overlapping siblings and a
                grandchild, the canonical unrepresentable parallel trace
    random      a seeded random forest with configurable sibling overlap

Every span carries resource attribute ``service.name`` and span attribute
``net.peer.name`` so hostname derivation is exercised. Output can be
serialized as an OTLP JSON export request, identical in schema to what the
ingest parsers accept.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .otlp import attributes_to_json, span_kind_to_number
from .spans import OtelSpan, SpanKind

PATTERNS = ("sequential", "nested", "fanout", "fig3", "random")

DEFAULT_BASE_EPOCH_NANOS = 1_700_000_000_000_000_000

_MAX_RANDOM_DEPTH = 8

# Start offsets and durations of the fixed parallel-trace shape: the two
# first children overlap, the second child spawns a grandchild while a
# third sibling runs.
_FIG3_SPANS = (
    # (name, parent name, start offset, end offset)
    ("root", None, 0, 1000),
    ("call1", "root", 100, 400),
    ("call2", "root", 200, 900),
    ("call4", "call2", 300, 620),
    ("call3", "root", 500, 800),
)


@dataclass(slots=True)
class GeneratorSpec:
    """Parameters of one generation run; all sizes must be >= 1."""

    pattern: str
    children: int = 3
    depth: int = 3
    span_count: int = 10
    seed: int = 0
    base_epoch_nanos: int = DEFAULT_BASE_EPOCH_NANOS
    overlap: float = 0.4


def generate(spec: GeneratorSpec) -> list[OtelSpan]:
    """Produce validated spans for the requested pattern, fully seeded."""
    if spec.pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {spec.pattern!r}, expected one of {PATTERNS}")
    if min(spec.children, spec.depth, spec.span_count) < 1:
        raise ValueError("size parameters must be >= 1")
    builder = _Builder(spec)
    build = getattr(builder, f"_{spec.pattern}")
    build()
    return builder.spans


class _Builder:
    def __init__(self, spec: GeneratorSpec):
        self.spec = spec
        self.rng = random.Random(spec.seed)
        self.trace_id = f"{self.rng.getrandbits(128) or 1:032x}"
        self.service = f"{spec.pattern}-service"
        self.host = f"{spec.pattern}-host.local"
        self.spans: list[OtelSpan] = []
        self._id_counter = 0
        self._cursor = spec.base_epoch_nanos

    def _next_id(self) -> str:
        self._id_counter += 1
        return f"{self._id_counter:016x}"

    def _emit(
        self,
        name: str,
        start: int,
        end: int,
        parent_span_id: str | None,
        host: str | None = None,
    ) -> str:
        span_id = self._next_id()
        self.spans.append(
            OtelSpan(
                trace_id=self.trace_id,
                span_id=span_id,
                parent_span_id=parent_span_id,
                name=name,
                kind=SpanKind.INTERNAL if parent_span_id else SpanKind.SERVER,
                start_epoch_nanos=start,
                end_epoch_nanos=end,
                attributes={"net.peer.name": host or self.host},
                resource_attributes={"service.name": self.service},
            )
        )
        return span_id

    # --- fixed shapes ----------------------------------------------------

    def _sequential(self) -> None:
        n = self.spec.children
        base = self.spec.base_epoch_nanos
        root = self._emit("root", base, base + 200 * n + 100, None)
        for i in range(n):
            start = base + 100 + 200 * i
            self._emit(f"step-{i}", start, start + 100, root)

    def _nested(self) -> None:
        d = self.spec.depth
        base = self.spec.base_epoch_nanos
        parent: str | None = None
        for i in range(d):
            parent = self._emit(f"level-{i}", base + 100 * i, base + 100 * (2 * d - i), parent)

    def _fanout(self) -> None:
        n = self.spec.children
        base = self.spec.base_epoch_nanos
        width = max(10_000, 10 * n)
        root = self._emit("root", base, base + width, None)
        for i in range(n):
            self._emit(f"branch-{i}", base + 100 + i, base + width - 100 - i, root)

    def _fig3(self) -> None:
        base = self.spec.base_epoch_nanos
        ids: dict[str, str] = {}
        for name, parent_name, start, end in _FIG3_SPANS:
            parent_id = ids[parent_name] if parent_name else None
            ids[name] = self._emit(name, base + start, base + end, parent_id)

    # --- seeded random forest ---------------------------------------------

    def _random(self) -> None:
        budget = self.spec.span_count
        budgets = [budget]
        # multi-root forests are inherently asynchronous, so only split when
        # overlap is allowed; overlap=0 must yield a synchronous tree
        if budget >= 4 and self.spec.overlap > 0 and self.rng.random() < 0.25:
            first = self.rng.randint(1, budget - 1)
            budgets = [first, budget - first]
        for part in budgets:
            self._grow(None, 0, part)

    def _tick(self) -> int:
        self._cursor += self.rng.randint(1, 50)
        return self._cursor

    def _grow(self, parent_span_id: str | None, depth: int, budget: int) -> int:
        """Emit one subtree consuming exactly ``budget`` spans; returns its end.

        Start timestamps strictly increase along the preorder traversal and
        every parent interval contains its children, which keeps the eoi/ess
        encoding losslessly invertible. Sibling overlap is drawn from the
        configured probability.
        """
        start = self._tick()
        span_id = self._next_id()
        host = f"host-{self.rng.randint(0, 2)}.local"
        index = len(self.spans)
        self.spans.append(None)  # type: ignore[arg-type]  # reserved until end is known
        remaining = budget - 1
        child_ends: list[int] = []
        while remaining > 0:
            if child_ends and self.rng.random() >= self.spec.overlap:
                # place the next child after the previous one has ended
                self._cursor = max(self._cursor, child_ends[-1])
            alloc = 1 if depth + 1 >= _MAX_RANDOM_DEPTH else self.rng.randint(1, remaining)
            child_ends.append(self._grow(span_id, depth + 1, alloc))
            remaining -= alloc
        end = max([self._cursor] + child_ends) + self.rng.randint(1, 500)
        self.spans[index] = OtelSpan(
            trace_id=self.trace_id,
            span_id=span_id,
            parent_span_id=parent_span_id,
            name=f"op-{span_id[-4:]}",
            kind=SpanKind.SERVER if parent_span_id is None else SpanKind.INTERNAL,
            start_epoch_nanos=start,
            end_epoch_nanos=end,
            attributes={"net.peer.name": host},
            resource_attributes={"service.name": self.service},
        )
        return end


# --- OTLP JSON serialization ----------------------------------------------


def spans_to_otlp_request(spans: list[OtelSpan]) -> dict:
    """Encode spans as the JSON mapping of an export request.

    Spans sharing identical resource attributes are grouped under one
    resource entry, in first-appearance order.
    """
    groups: list[tuple[dict, list[OtelSpan]]] = []
    for span in spans:
        for attrs, members in groups:
            if attrs == span.resource_attributes:
                members.append(span)
                break
        else:
            groups.append((dict(span.resource_attributes), [span]))
    return {
        "resourceSpans": [
            {
                "resource": {"attributes": attributes_to_json(attrs)},
                "scopeSpans": [
                    {
                        "scope": {"name": "span2records.generator"},
                        "spans": [_span_to_json(span) for span in members],
                    }
                ],
            }
            for attrs, members in groups
        ]
    }


def _span_to_json(span: OtelSpan) -> dict:
    encoded: dict[str, object] = {
        "traceId": span.trace_id,
        "spanId": span.span_id,
        "name": span.name,
        "kind": span_kind_to_number(span.kind),
        "startTimeUnixNano": str(span.start_epoch_nanos),
        "endTimeUnixNano": str(span.end_epoch_nanos),
        "attributes": attributes_to_json(span.attributes),
    }
    if span.parent_span_id is not None:
        encoded["parentSpanId"] = span.parent_span_id
    if span.events:
        encoded["events"] = [
            {
                "timeUnixNano": str(event.epoch_nanos),
                "name": event.name,
                "attributes": attributes_to_json(event.attributes),
            }
            for event in span.events
        ]
    return encoded


def write_otlp_json(spans: list[OtelSpan], path: str | Path) -> None:
    """Write spans to ``path`` as a pretty-printed OTLP JSON export request."""
    Path(path).write_text(
        json.dumps(spans_to_otlp_request(spans), indent=2) + "\n", encoding="utf-8"
    )
