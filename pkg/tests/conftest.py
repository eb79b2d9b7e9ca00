"""Shared builders and hypothesis strategies for the test suite."""

from hypothesis import strategies as st

from span2records.records import OperationExecutionRecord
from span2records.spans import OtelSpan, SpanKind

TRACE_ID = "0123456789abcdef0123456789abcdef"


def make_span(
    span_id: str,
    *,
    trace_id: str = TRACE_ID,
    parent: str | None = None,
    name: str = "op",
    start: int = 0,
    end: int = 100,
    kind: SpanKind = SpanKind.INTERNAL,
    attrs: dict | None = None,
    resource: dict | None = None,
) -> OtelSpan:
    """Build a valid span with short ids padded to the canonical length."""
    return OtelSpan(
        trace_id=trace_id,
        span_id=span_id.rjust(16, "0"),
        parent_span_id=parent.rjust(16, "0") if parent else None,
        name=name,
        kind=kind,
        start_epoch_nanos=start,
        end_epoch_nanos=end,
        attributes=dict(attrs or {}),
        resource_attributes=dict(resource or {}),
    )


def hex_ids(length: int):
    return st.text(alphabet="0123456789abcdef", min_size=length, max_size=length).filter(
        lambda s: set(s) != {"0"}
    )


# text that survives a UTF-8 file round trip
field_text = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=30
)


@st.composite
def records(draw) -> OperationExecutionRecord:
    tin = draw(st.integers(min_value=0, max_value=2**60))
    return OperationExecutionRecord(
        operation_signature=draw(field_text),
        session_id=draw(field_text),
        trace_id=draw(st.integers(min_value=-(2**63), max_value=2**63 - 1)),
        tin=tin,
        tout=tin + draw(st.integers(min_value=0, max_value=10**9)),
        hostname=draw(field_text),
        eoi=draw(st.integers(min_value=0, max_value=2**31 - 1)),
        ess=draw(st.integers(min_value=0, max_value=2**31 - 1)),
        logging_timestamp=draw(st.integers(min_value=-(2**63), max_value=2**63 - 1)),
    )


@st.composite
def hostname_spans(draw) -> OtelSpan:
    """Valid spans with a random mix of hostname-relevant attributes."""
    attrs = {}
    if draw(st.booleans()):
        attrs["net.peer.name"] = draw(field_text)
    if draw(st.booleans()):
        attrs["net.sock.peer.addr"] = draw(field_text)
    resource = {}
    if draw(st.booleans()):
        resource["service.name"] = draw(field_text)
    start = draw(st.integers(min_value=0, max_value=2**62))
    return OtelSpan(
        trace_id=draw(hex_ids(32)),
        span_id=draw(hex_ids(16)),
        name=draw(field_text),
        kind=draw(st.sampled_from(list(SpanKind))),
        start_epoch_nanos=start,
        end_epoch_nanos=start + draw(st.integers(min_value=0, max_value=10**12)),
        attributes=attrs,
        resource_attributes=resource,
    )


@st.composite
def span_sets(draw) -> list[OtelSpan]:
    """Shuffled span lists over two traces with resolvable and dangling parents."""
    count = draw(st.integers(min_value=1, max_value=20))
    spans = []
    for i in range(1, count + 1):
        parent = None
        if i > 1 and draw(st.booleans()):
            parent = f"{draw(st.integers(min_value=1, max_value=i - 1)):x}"
        elif draw(st.integers(min_value=0, max_value=9)) == 0:
            parent = "dead"  # never a generated id
        start = draw(st.integers(min_value=0, max_value=500))
        trace_id = TRACE_ID if draw(st.booleans()) else TRACE_ID.replace("0", "f", 1)
        spans.append(
            make_span(
                f"{i:x}",
                trace_id=trace_id,
                parent=parent,
                name=f"op-{i}",
                start=start,
                end=start + draw(st.integers(min_value=0, max_value=500)),
            )
        )
    return draw(st.permutations(spans))
