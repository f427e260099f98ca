"""Byte-level record model and the length-prefixed wire format.

Everything that moves between PEs is a :class:`Record`: an opaque key and
an opaque value, both byte strings.  Benchmarks layer their own typed
encodings (counters, edges, scores) on top; the engine never interprets
record contents beyond hashing keys and measuring sizes.

Wire format of one record::

    [key_len: u32 LE][key bytes][value_len: u32 LE][value bytes]

Dumps and fixtures are plain concatenations of encoded records.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

# PEs and steps are identified by small ints; aliases document intent.
PeId = int
StepId = int

_LEN = struct.Struct("<I")
MAX_FIELD = 0xFFFFFFFF


class EncodeError(ValueError):
    """A record field does not fit the wire format."""


class DecodeError(ValueError):
    """Malformed or truncated record bytes.

    ``offset`` is the position (relative to the start of the buffer) at
    which the undecodable field begins.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


@dataclass(frozen=True, slots=True)
class Record:
    """One immutable key/value pair."""

    key: bytes
    value: bytes

    @property
    def size(self) -> int:
        """Payload size in bytes, excluding framing overhead."""
        return len(self.key) + len(self.value)


def encode_record(record: Record) -> bytes:
    """Serialize one record into the length-prefixed wire format."""
    key, value = record.key, record.value
    if len(key) > MAX_FIELD or len(value) > MAX_FIELD:
        raise EncodeError("record field exceeds u32 length prefix")
    return b"".join((_LEN.pack(len(key)), key, _LEN.pack(len(value)), value))


def decode_record(buf: bytes, offset: int = 0) -> tuple[Record, int]:
    """Decode one record starting at ``offset``.

    Returns the record and the number of bytes consumed.  Raises
    :class:`DecodeError` carrying the offset of the truncated field.
    """
    fields = []
    pos = offset
    for _ in range(2):
        if pos + 4 > len(buf):
            raise DecodeError("truncated length prefix", pos)
        (length,) = _LEN.unpack_from(buf, pos)
        pos += 4
        if pos + length > len(buf):
            raise DecodeError("truncated field body", pos)
        fields.append(bytes(buf[pos : pos + length]))
        pos += length
    return Record(fields[0], fields[1]), pos - offset


def decode_stream(buf: bytes) -> list[Record]:
    """Decode a concatenation of records; the buffer must end on a boundary."""
    records = []
    pos = 0
    while pos < len(buf):
        record, consumed = decode_record(buf, pos)
        records.append(record)
        pos += consumed
    return records


def encode_stream(records) -> bytes:
    """Concatenate the wire encodings of ``records``."""
    return b"".join(encode_record(r) for r in records)
