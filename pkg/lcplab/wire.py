"""Tagged binary frames exchanged between protocol actors.

Frame layout: tag (1 byte) | flags (1 byte) | payload length (4 bytes, big-endian) | payload.
The payload is a sequence of fields, each kind (1 byte) | length (4 bytes) | data.
MATERIAL fields carry fixed-width big-endian ciphertexts and group elements; they
are the only bytes counted by the communication accounting.
"""
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, List, Sequence, Tuple

from .errors import DomainError

_HEADER = struct.Struct('>BBI')
_FIELD = struct.Struct('>BI')

FLAG_SNAPSHOT = 0x01


class Tag(IntEnum):
    SETUP_REQUEST = 1
    SETUP_KEY = 2
    HELLO = 3
    SPOTER_CHALLENGE = 4
    SPOTER_RESPONSE = 5
    TOKEN = 6
    REDEEM = 7
    SHARE = 8
    REJECT = 9
    CHECKIN_REQUEST = 10
    COUNTERS = 11
    COUNTERS_NEXT = 12
    COMMIT = 13
    CHALLENGE = 14
    REVEAL = 15
    CHECKIN_RESULT = 16
    PUBLISH = 17
    PSEUDONYM_REQUEST = 18
    PSEUDONYM_GRANT = 19
    MIX_ENVELOPE = 20
    TIMER = 21
    SNAPSHOT_KEY = 22
    RING_PRODUCT = 23
    BLINDING_PUBLISH = 24


class Kind(IntEnum):
    MATERIAL = 1
    INT = 2
    BYTES = 3
    TEXT = 4


@dataclass(frozen=True)
class Field:
    kind: Kind
    data: bytes


@dataclass(frozen=True)
class Frame:
    tag: Tag
    fields: Tuple[Field, ...] = ()
    flags: int = 0

    @property
    def snapshot(self) -> bool:
        return bool(self.flags & FLAG_SNAPSHOT)

    def material(self, position: int) -> int:
        return _expect(self, position, Kind.MATERIAL)

    def integer(self, position: int) -> int:
        return _expect(self, position, Kind.INT)

    def blob(self, position: int) -> bytes:
        return _expect(self, position, Kind.BYTES)

    def text(self, position: int) -> str:
        return _expect(self, position, Kind.TEXT)

    def materials(self, start: int = 0) -> List[int]:
        return [int.from_bytes(f.data, 'big') for f in self.fields[start:]
                if f.kind == Kind.MATERIAL]


def _expect(frame: Frame, position: int, kind: Kind):
    try:
        f = frame.fields[position]
    except IndexError:
        raise DomainError(f"{frame.tag.name} frame has no field {position}") from None
    if f.kind != kind:
        raise DomainError(f"{frame.tag.name} field {position} is {f.kind.name}, not {kind.name}")
    if kind == Kind.MATERIAL:
        return int.from_bytes(f.data, 'big')
    if kind == Kind.INT:
        return int.from_bytes(f.data, 'big', signed=True)
    if kind == Kind.TEXT:
        return f.data.decode('utf-8')
    return f.data


def material(value: int, width: int) -> Field:
    return Field(Kind.MATERIAL, value.to_bytes(width, 'big'))


def materials(values: Iterable[int], width: int) -> List[Field]:
    return [material(v, width) for v in values]


def integer(value: int) -> Field:
    return Field(Kind.INT, int(value).to_bytes(8, 'big', signed=True))


def blob(data: bytes) -> Field:
    return Field(Kind.BYTES, bytes(data))


def text(value: str) -> Field:
    return Field(Kind.TEXT, value.encode('utf-8'))


def frame(tag: Tag, fields: Sequence[Field] = (), snapshot: bool = False) -> Frame:
    return Frame(tag=tag, fields=tuple(fields), flags=FLAG_SNAPSHOT if snapshot else 0)


def encode(f: Frame) -> bytes:
    payload = b''.join(_FIELD.pack(x.kind, len(x.data)) + x.data for x in f.fields)
    return _HEADER.pack(f.tag, f.flags, len(payload)) + payload


def decode(data: bytes) -> Frame:
    if len(data) < _HEADER.size:
        raise DomainError("truncated frame header")
    tag, flags, length = _HEADER.unpack_from(data)
    if len(data) != _HEADER.size + length:
        raise DomainError("frame length mismatch")
    fields, pos = [], _HEADER.size
    while pos < len(data):
        kind, size = _FIELD.unpack_from(data, pos)
        pos += _FIELD.size
        fields.append(Field(Kind(kind), data[pos:pos + size]))
        pos += size
    if pos != len(data):
        raise DomainError("truncated frame field")
    return Frame(tag=Tag(tag), fields=tuple(fields), flags=flags)


def payload_bits(f: Frame) -> int:
    """Bits of ciphertext material carried by a frame (headers excluded)."""
    return 8 * sum(len(x.data) for x in f.fields if x.kind == Kind.MATERIAL)
