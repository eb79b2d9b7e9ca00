"""Parsers for OTLP trace export payloads.

Both encodings of ExportTraceServiceRequest are supported: the JSON mapping
(hex ids, 64-bit integers as strings) and binary protobuf. Resource
attributes are copied onto every span of their resource. Spans that fail
validation are skipped with a warning; structural problems raise
MalformedPayload.
"""

from __future__ import annotations

import json
import logging
import struct
from pathlib import Path

from .spans import InvalidSpan, OtelSpan, SpanEvent, SpanKind, ZERO_SPAN_ID, validate_span

logger = logging.getLogger(__name__)

_KIND_BY_NUMBER = {
    0: SpanKind.INTERNAL,  # unspecified defaults to internal
    1: SpanKind.INTERNAL,
    2: SpanKind.SERVER,
    3: SpanKind.CLIENT,
    4: SpanKind.PRODUCER,
    5: SpanKind.CONSUMER,
}
_NUMBER_BY_KIND = {
    SpanKind.INTERNAL: 1,
    SpanKind.SERVER: 2,
    SpanKind.CLIENT: 3,
    SpanKind.PRODUCER: 4,
    SpanKind.CONSUMER: 5,
}


class MalformedPayload(Exception):
    """An export request that violates the OTLP schema or encoding."""

    def __init__(self, position: int | str, reason: str):
        super().__init__(f"{position}: {reason}")
        self.position = position
        self.reason = reason


def span_kind_to_number(kind: SpanKind) -> int:
    return _NUMBER_BY_KIND[kind]


def span_kind_from_wire(value: object) -> SpanKind:
    """Accept the enum number or a SPAN_KIND_* name, default INTERNAL."""
    if isinstance(value, int) and value in _KIND_BY_NUMBER:
        return _KIND_BY_NUMBER[value]
    if isinstance(value, str):
        name = value.removeprefix("SPAN_KIND_")
        if name in SpanKind.__members__:
            return SpanKind[name]
    return SpanKind.INTERNAL


# --- JSON mapping ---------------------------------------------------------


def parse_otlp_json(payload: bytes) -> list[OtelSpan]:
    """Parse the JSON mapping of an ExportTraceServiceRequest."""
    try:
        document = json.loads(payload.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise MalformedPayload(exc.start, "payload is not UTF-8") from None
    except json.JSONDecodeError as exc:
        raise MalformedPayload(exc.pos, f"invalid JSON: {exc.msg}") from None
    if not isinstance(document, dict):
        raise MalformedPayload("$", "expected a JSON object")
    resource_blocks = _expect_list(document, "resourceSpans", "$")
    spans: list[OtelSpan] = []
    for r_index, block in enumerate(resource_blocks):
        position = f"resourceSpans[{r_index}]"
        if not isinstance(block, dict):
            raise MalformedPayload(position, "expected an object")
        resource = block.get("resource", {})
        if not isinstance(resource, dict):
            raise MalformedPayload(f"{position}.resource", "expected an object")
        resource_attrs = _attributes_from_json(
            resource.get("attributes", []), f"{position}.resource.attributes"
        )
        for s_index, scope_block in enumerate(_expect_list(block, "scopeSpans", position)):
            scope_position = f"{position}.scopeSpans[{s_index}]"
            if not isinstance(scope_block, dict):
                raise MalformedPayload(scope_position, "expected an object")
            for raw in _expect_list(scope_block, "spans", scope_position):
                if not isinstance(raw, dict):
                    raise MalformedPayload(f"{scope_position}.spans", "expected span objects")
                try:
                    spans.append(validate_span(_span_from_json(raw, resource_attrs)))
                except InvalidSpan as exc:
                    logger.warning("skipping invalid span: %s", exc.reason)
    return spans


def _expect_list(container: dict, key: str, position: str) -> list:
    value = container.get(key, [])
    if not isinstance(value, list):
        raise MalformedPayload(f"{position}.{key}", "expected an array")
    return value


def _span_from_json(raw: dict, resource_attrs: dict) -> OtelSpan:
    parent = str(raw.get("parentSpanId", "") or "").lower()
    if parent in ("", ZERO_SPAN_ID):
        parent_span_id = None
    else:
        parent_span_id = parent
    return OtelSpan(
        trace_id=str(raw.get("traceId", "")).lower(),
        span_id=str(raw.get("spanId", "")).lower(),
        parent_span_id=parent_span_id,
        name=str(raw.get("name", "")),
        kind=span_kind_from_wire(raw.get("kind", 0)),
        start_epoch_nanos=_nanos(raw.get("startTimeUnixNano", 0)),
        end_epoch_nanos=_nanos(raw.get("endTimeUnixNano", 0)),
        attributes=_attributes_from_json(raw.get("attributes", []), "span.attributes"),
        resource_attributes=dict(resource_attrs),
        events=[_event_from_json(e) for e in raw.get("events", []) if isinstance(e, dict)],
    )


def _event_from_json(raw: dict) -> SpanEvent:
    return SpanEvent(
        epoch_nanos=_nanos(raw.get("timeUnixNano", 0)),
        name=str(raw.get("name", "")),
        attributes=_attributes_from_json(raw.get("attributes", []), "event.attributes"),
    )


def _nanos(value: object) -> int:
    if isinstance(value, bool):
        raise InvalidSpan(f"timestamp {value!r} is not an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        try:
            return int(value)
        except ValueError:
            raise InvalidSpan(f"timestamp {value!r} is not an integer") from None
    raise InvalidSpan(f"timestamp {value!r} is not an integer")


def _attributes_from_json(raw: object, position: str) -> dict[str, str | int | float | bool]:
    if not isinstance(raw, list):
        raise MalformedPayload(position, "expected an array of key/value pairs")
    attributes: dict[str, str | int | float | bool] = {}
    for pair in raw:
        if not isinstance(pair, dict) or "key" not in pair:
            raise MalformedPayload(position, "attribute entries need a key")
        value = _attr_value_from_json(pair.get("value", {}))
        if value is None:
            logger.debug("dropping attribute %r with unsupported value", pair["key"])
            continue
        attributes[str(pair["key"])] = value
    return attributes


def _attr_value_from_json(raw: object) -> str | int | float | bool | None:
    if not isinstance(raw, dict):
        return None
    if "stringValue" in raw:
        return str(raw["stringValue"])
    if "boolValue" in raw:
        return bool(raw["boolValue"])
    if "intValue" in raw:
        try:
            return int(raw["intValue"])
        except (TypeError, ValueError):
            return None
    if "doubleValue" in raw:
        try:
            return float(raw["doubleValue"])
        except (TypeError, ValueError):
            return None
    return None  # arrays, kvlists and bytes have no record mapping


def attributes_to_json(attributes: dict[str, str | int | float | bool]) -> list[dict]:
    """Encode an attribute map in the OTLP JSON key/value list form."""
    encoded = []
    for key, value in attributes.items():
        if isinstance(value, bool):
            wrapped: dict[str, object] = {"boolValue": value}
        elif isinstance(value, int):
            wrapped = {"intValue": str(value)}
        elif isinstance(value, float):
            wrapped = {"doubleValue": value}
        else:
            wrapped = {"stringValue": str(value)}
        encoded.append({"key": key, "value": wrapped})
    return encoded


# --- binary protobuf ------------------------------------------------------
#
# Minimal wire-format reader for the fields this toolkit consumes. Field
# numbers follow the published OTLP trace schema:
#   ExportTraceServiceRequest: resource_spans = 1
#   ResourceSpans: resource = 1, scope_spans = 2
#   Resource: attributes = 1
#   ScopeSpans: spans = 2
#   Span: trace_id=1 span_id=2 parent_span_id=4 name=5 kind=6
#         start_time_unix_nano=7 end_time_unix_nano=8 attributes=9 events=11
#   Span.Event: time_unix_nano=1 name=2 attributes=3
#   KeyValue: key=1 value=2
#   AnyValue: string_value=1 bool_value=2 int_value=3 double_value=4
# Unknown fields are skipped, as protobuf requires.

_WIRE_VARINT = 0
_WIRE_I64 = 1
_WIRE_LEN = 2
_WIRE_I32 = 5


def _read_varint(buf: bytes, pos: int, base: int) -> tuple[int, int]:
    result = 0
    shift = 0
    while True:
        if pos >= len(buf):
            raise MalformedPayload(base + pos, "truncated varint")
        byte = buf[pos]
        pos += 1
        result |= (byte & 0x7F) << shift
        if not byte & 0x80:
            return result, pos
        shift += 7
        if shift >= 70:
            raise MalformedPayload(base + pos, "varint longer than 10 bytes")


def _scan(buf: bytes, base: int = 0):
    """Yield (field_number, wire_type, value, absolute_offset) tuples.

    value is an int for varint/i64/i32 fields and bytes for
    length-delimited fields.
    """
    pos = 0
    while pos < len(buf):
        offset = base + pos
        tag, pos = _read_varint(buf, pos, base)
        number, wire = tag >> 3, tag & 0x7
        if number == 0:
            raise MalformedPayload(offset, "field number 0 is reserved")
        if wire == _WIRE_VARINT:
            value, pos = _read_varint(buf, pos, base)
        elif wire == _WIRE_I64:
            if pos + 8 > len(buf):
                raise MalformedPayload(base + pos, "truncated 64-bit field")
            value = int.from_bytes(buf[pos : pos + 8], "little")
            pos += 8
        elif wire == _WIRE_LEN:
            length, pos = _read_varint(buf, pos, base)
            if pos + length > len(buf):
                raise MalformedPayload(base + pos, "truncated length-delimited field")
            value = buf[pos : pos + length]
            pos += length
        elif wire == _WIRE_I32:
            if pos + 4 > len(buf):
                raise MalformedPayload(base + pos, "truncated 32-bit field")
            value = int.from_bytes(buf[pos : pos + 4], "little")
            pos += 4
        else:
            raise MalformedPayload(offset, f"unsupported wire type {wire}")
        yield number, wire, value, offset


def parse_otlp_protobuf(payload: bytes) -> list[OtelSpan]:
    """Parse a binary ExportTraceServiceRequest; same semantics as JSON."""
    spans: list[OtelSpan] = []
    for number, wire, value, offset in _scan(payload):
        if number == 1 and wire == _WIRE_LEN:
            _decode_resource_spans(value, offset, spans)
    return spans


def _decode_resource_spans(buf: bytes, base: int, out: list[OtelSpan]) -> None:
    resource_attrs: dict[str, str | int | float | bool] = {}
    span_fields: list[tuple[bytes, int]] = []
    for number, wire, value, offset in _scan(buf, base):
        if number == 1 and wire == _WIRE_LEN:
            resource_attrs = _decode_attribute_list(value, offset)
        elif number == 2 and wire == _WIRE_LEN:
            for n2, w2, v2, o2 in _scan(value, offset):
                if n2 == 2 and w2 == _WIRE_LEN:
                    span_fields.append((v2, o2))
    # resource may be encoded after the spans, so link attributes afterwards
    for raw, offset in span_fields:
        try:
            out.append(validate_span(_decode_span(raw, offset, resource_attrs)))
        except InvalidSpan as exc:
            logger.warning("skipping invalid span: %s", exc.reason)


def _decode_attribute_list(buf: bytes, base: int) -> dict[str, str | int | float | bool]:
    # Resource message: attributes = 1
    attributes: dict[str, str | int | float | bool] = {}
    for number, wire, value, offset in _scan(buf, base):
        if number == 1 and wire == _WIRE_LEN:
            _decode_key_value(value, offset, attributes)
    return attributes


def _decode_key_value(buf: bytes, base: int, into: dict) -> None:
    key: str | None = None
    value: str | int | float | bool | None = None
    for number, wire, raw, offset in _scan(buf, base):
        if number == 1 and wire == _WIRE_LEN:
            key = raw.decode("utf-8", "replace")
        elif number == 2 and wire == _WIRE_LEN:
            value = _decode_any_value(raw, offset)
    if key is not None and value is not None:
        into[key] = value


def _decode_any_value(buf: bytes, base: int) -> str | int | float | bool | None:
    for number, wire, raw, offset in _scan(buf, base):
        if number == 1 and wire == _WIRE_LEN:
            return raw.decode("utf-8", "replace")
        if number == 2 and wire == _WIRE_VARINT:
            return bool(raw)
        if number == 3 and wire == _WIRE_VARINT:
            return raw - (1 << 64) if raw >= (1 << 63) else raw
        if number == 4 and wire == _WIRE_I64:
            return struct.unpack("<d", raw.to_bytes(8, "little"))[0]
    return None


def _decode_span(buf: bytes, base: int, resource_attrs: dict) -> OtelSpan:
    trace_id = b""
    span_id = b""
    parent_id = b""
    name = ""
    kind = 0
    start = 0
    end = 0
    attributes: dict[str, str | int | float | bool] = {}
    events: list[SpanEvent] = []
    for number, wire, value, offset in _scan(buf, base):
        if number == 1 and wire == _WIRE_LEN:
            trace_id = value
        elif number == 2 and wire == _WIRE_LEN:
            span_id = value
        elif number == 4 and wire == _WIRE_LEN:
            parent_id = value
        elif number == 5 and wire == _WIRE_LEN:
            name = value.decode("utf-8", "replace")
        elif number == 6 and wire == _WIRE_VARINT:
            kind = value
        elif number == 7 and wire in (_WIRE_I64, _WIRE_VARINT):
            start = value
        elif number == 8 and wire in (_WIRE_I64, _WIRE_VARINT):
            end = value
        elif number == 9 and wire == _WIRE_LEN:
            _decode_key_value(value, offset, attributes)
        elif number == 11 and wire == _WIRE_LEN:
            events.append(_decode_event(value, offset))
    parent_hex = parent_id.hex()
    return OtelSpan(
        trace_id=trace_id.hex(),
        span_id=span_id.hex(),
        parent_span_id=None if parent_hex in ("", ZERO_SPAN_ID) else parent_hex,
        name=name,
        kind=span_kind_from_wire(kind),
        start_epoch_nanos=start,
        end_epoch_nanos=end,
        attributes=attributes,
        resource_attributes=dict(resource_attrs),
        events=events,
    )


def _decode_event(buf: bytes, base: int) -> SpanEvent:
    nanos = 0
    name = ""
    attributes: dict[str, str | int | float | bool] = {}
    for number, wire, value, offset in _scan(buf, base):
        if number == 1 and wire in (_WIRE_I64, _WIRE_VARINT):
            nanos = value
        elif number == 2 and wire == _WIRE_LEN:
            name = value.decode("utf-8", "replace")
        elif number == 3 and wire == _WIRE_LEN:
            _decode_key_value(value, offset, attributes)
    return SpanEvent(epoch_nanos=nanos, name=name, attributes=attributes)


# --- file input -----------------------------------------------------------


def load_otlp_file(path: str | Path) -> list[OtelSpan]:
    """Read an export request from a ``.json`` or ``.binpb`` file."""
    path = Path(path)
    payload = path.read_bytes()
    if path.suffix == ".json":
        return parse_otlp_json(payload)
    if path.suffix == ".binpb":
        return parse_otlp_protobuf(payload)
    raise MalformedPayload(str(path), f"unsupported file extension {path.suffix!r}")
