"""Kieker operation-execution records and the text monitoring-log directory codec.

A monitoring log is a directory holding a ``kieker.map`` file that maps
record-type keys to fully qualified record type names, plus one or more
``*.dat`` files with one semicolon-separated record per line:

    $1;<logging_timestamp>;<operation_signature>;<session_id>;<trace_id>;<tin>;<tout>;<hostname>;<eoi>;<ess>

Text fields escape ``\\`` as ``\\\\``, ``;`` as ``\\;`` and newline as ``\\n``
so free-form signatures (HTTP routes and the like) survive the line grammar.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

RECORD_TYPE = "kieker.common.record.controlflow.OperationExecutionRecord"
RECORD_KEY = "$1"
MAP_FILENAME = "kieker.map"
NO_SESSION_ID = "<no-session-id>"

_INT64_MIN, _INT64_MAX = -(1 << 63), (1 << 63) - 1
_INT32_MIN, _INT32_MAX = -(1 << 31), (1 << 31) - 1


class MonitoringLogError(Exception):
    """Base class for monitoring-log read failures."""


class UnknownRecordKey(MonitoringLogError):
    def __init__(self, key: str, location: str):
        super().__init__(f"{location}: record key {key!r} not present in {MAP_FILENAME}")
        self.key = key


class FieldCountMismatch(MonitoringLogError):
    def __init__(self, line: int, location: str, count: int):
        super().__init__(f"{location}: expected 10 fields, got {count}")
        self.line = line


class NumberParseError(MonitoringLogError):
    def __init__(self, line: int, fieldname: str, location: str, value: str):
        super().__init__(f"{location}: field {fieldname!r} is not a number: {value!r}")
        self.line = line
        self.field = fieldname


@dataclass(slots=True)
class OperationExecutionRecord:
    """One operation execution: signature, timing, host and eoi/ess position.

    ``eoi`` is the 0-based execution order index within the trace, ``ess``
    the call-stack depth. ``logging_timestamp`` defaults to ``tout`` since
    a record is complete at operation exit.
    """

    operation_signature: str
    trace_id: int
    tin: int
    tout: int
    hostname: str
    eoi: int
    ess: int
    session_id: str = NO_SESSION_ID
    logging_timestamp: int | None = None

    def __post_init__(self) -> None:
        if self.logging_timestamp is None:
            self.logging_timestamp = self.tout
        if self.tin > self.tout:
            raise ValueError(f"tin {self.tin} > tout {self.tout}")
        if self.eoi < 0 or self.ess < 0:
            raise ValueError(f"eoi/ess must be non-negative, got eoi={self.eoi} ess={self.ess}")
        for name, value in (("eoi", self.eoi), ("ess", self.ess)):
            if not _INT32_MIN <= value <= _INT32_MAX:
                raise ValueError(f"{name} {value} outside signed 32-bit range")
        for name, value in (
            ("logging_timestamp", self.logging_timestamp),
            ("trace_id", self.trace_id),
            ("tin", self.tin),
            ("tout", self.tout),
        ):
            if not _INT64_MIN <= value <= _INT64_MAX:
                raise ValueError(f"{name} {value} outside signed 64-bit range")


@dataclass(slots=True)
class MonitoringLog:
    """A written monitoring-log directory: its map entries and record list."""

    directory: Path
    map_entries: dict[str, str]
    records: list[OperationExecutionRecord] = field(default_factory=list)


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace(";", "\\;").replace("\n", "\\n")


def _unescape(text: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(text):
        c = text[i]
        if c == "\\" and i + 1 < len(text):
            nxt = text[i + 1]
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
            if nxt == ";":
                out.append(";")
                i += 2
                continue
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
        out.append(c)
        i += 1
    return "".join(out)


def _split_fields(line: str) -> list[str]:
    """Split on ';' separators that are not escaped by a backslash."""
    fields: list[str] = []
    buf: list[str] = []
    escaped = False
    for c in line:
        if escaped:
            buf.append(c)
            escaped = False
        elif c == "\\":
            buf.append(c)
            escaped = True
        elif c == ";":
            fields.append("".join(buf))
            buf = []
        else:
            buf.append(c)
    fields.append("".join(buf))
    return fields


def format_record_line(record: OperationExecutionRecord) -> str:
    return ";".join(
        (
            RECORD_KEY,
            str(record.logging_timestamp),
            _escape(record.operation_signature),
            _escape(record.session_id),
            str(record.trace_id),
            str(record.tin),
            str(record.tout),
            _escape(record.hostname),
            str(record.eoi),
            str(record.ess),
        )
    )


def data_file_name(timestamp: datetime) -> str:
    return timestamp.astimezone(timezone.utc).strftime("kieker-%Y%m%d-%H%M%S-UTC-001.dat")


class MonitoringLogWriter:
    """Appends records to a single data file inside a monitoring-log directory.

    The directory is created if missing and ``kieker.map`` is (re)written on
    open. Not thread safe; one writer per directory.
    """

    def __init__(self, directory: str | Path, timestamp: datetime | None = None):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        map_path = self.directory / MAP_FILENAME
        map_path.write_text(f"{RECORD_KEY}={RECORD_TYPE}\n", encoding="utf-8", newline="")
        stamp = timestamp if timestamp is not None else datetime.now(timezone.utc)
        self.data_path = self.directory / data_file_name(stamp)
        self._handle = open(self.data_path, "w", encoding="utf-8", newline="")

    def append(self, records: list[OperationExecutionRecord]) -> None:
        for record in records:
            self._handle.write(format_record_line(record))
            self._handle.write("\n")
        self._handle.flush()

    def close(self) -> None:
        self._handle.close()

    def __enter__(self) -> "MonitoringLogWriter":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()


def write_monitoring_log(
    records: list[OperationExecutionRecord],
    directory: str | Path,
    timestamp: datetime | None = None,
) -> MonitoringLog:
    """Write records as a fresh monitoring log under ``directory``.

    ``timestamp`` fixes the data-file name (useful for reproducible output);
    it defaults to the current UTC time.
    """
    with MonitoringLogWriter(directory, timestamp=timestamp) as writer:
        writer.append(records)
    return MonitoringLog(
        directory=Path(directory),
        map_entries={RECORD_KEY: RECORD_TYPE},
        records=list(records),
    )


def _read_map(path: Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise MonitoringLogError(f"{path.name}:{lineno}: malformed map entry {line!r}")
        entries[key] = value
    return entries


def read_monitoring_log(directory: str | Path) -> list[OperationExecutionRecord]:
    """Parse a monitoring-log directory back into records.

    Data files are processed in lexicographic name order. Lines whose key
    maps to a record type other than OperationExecutionRecord are skipped
    with a counter; unknown keys, wrong field counts and unparsable numbers
    raise.
    """
    directory = Path(directory)
    map_entries = _read_map(directory / MAP_FILENAME)
    records: list[OperationExecutionRecord] = []
    skipped = 0
    for data_path in sorted(directory.glob("*.dat")):
        # newline="" keeps carriage returns inside fields intact
        with open(data_path, "r", encoding="utf-8", newline="") as handle:
            content = handle.read()
        for lineno, line in enumerate(content.split("\n"), 1):
            if line == "":
                continue
            location = f"{data_path.name}:{lineno}"
            fields = _split_fields(line)
            key = fields[0]
            if key not in map_entries:
                raise UnknownRecordKey(key, location)
            if map_entries[key] != RECORD_TYPE:
                skipped += 1
                continue
            if len(fields) != 10:
                raise FieldCountMismatch(lineno, location, len(fields))
            records.append(_parse_fields(fields, lineno, location))
    if skipped:
        logger.info("skipped %d records of foreign types", skipped)
    return records


def _parse_fields(fields: list[str], lineno: int, location: str) -> OperationExecutionRecord:
    def number(index: int, name: str) -> int:
        try:
            return int(fields[index])
        except ValueError:
            raise NumberParseError(lineno, name, location, fields[index]) from None

    return OperationExecutionRecord(
        logging_timestamp=number(1, "logging_timestamp"),
        operation_signature=_unescape(fields[2]),
        session_id=_unescape(fields[3]),
        trace_id=number(4, "trace_id"),
        tin=number(5, "tin"),
        tout=number(6, "tout"),
        hostname=_unescape(fields[7]),
        eoi=number(8, "eoi"),
        ess=number(9, "ess"),
    )
