"""Wire codec for the 10 Hz vehicle status beacon.

Message layout (big-endian, fixed widths), followed by an opaque
piggyback region zero-padded to the total message size:

  offset  width  field
  0       4      seq           u32   sequence number, monotone per sender
  4       2      interval_ms   u16   beacon interval, 100..500 ms
  6       8      timestamp_ms  u64   simulation time since run start
  14      8      elp           u64   electronic license plate
  22      4      pos_x_cm      i32   grid x, cm, origin at corridor SW corner
  26      4      pos_y_cm      i32   grid y, cm
  30      2      speed_cms     i16   signed speed along corridor axis, cm/s
  32      2      dir_cdeg      u16   heading, centidegrees, < 36000
  34      2      max_p_cdbm    i16   max received power, centi-dBm
  36      2      min_p_cdbm    i16   min received power, centi-dBm
  38      2      pow_u_cdbm    i16   transmit power used, centi-dBm

Safety messages are exactly 100 bytes (60-byte piggyback region),
non-safety messages 512 bytes (472-byte region) with the same header.
Trailing zero bytes in the piggyback region are padding, not data;
anything stored there must be length-delimited internally.

Power fields are carried in centi-dBm; the underlying radio standard
leaves their unit unspecified and receivers must not assume otherwise.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

HEADER_SIZE = 40
SAFETY_MESSAGE_SIZE = 100
NON_SAFETY_MESSAGE_SIZE = 512

_HEADER = struct.Struct(">IHQQiihHhhh")
assert _HEADER.size == HEADER_SIZE


class InvalidField(ValueError):
    """A beacon field violates its declared range; caller bug, never clamped."""


class MalformedBeacon(ValueError):
    """Received bytes are not a valid beacon message."""


_U16 = (0, 0xFFFF)
_U32 = (0, 0xFFFFFFFF)
_U64 = (0, 0xFFFFFFFFFFFFFFFF)
_I16 = (-0x8000, 0x7FFF)
_I32 = (-0x80000000, 0x7FFFFFFF)


@dataclass(eq=False)
class Beacon:
    """One beacon message.

    ``piggyback`` compares equal modulo trailing zero padding, so a
    decoded beacon (whose region is always full-width) equals the
    beacon it was encoded from.
    """

    seq: int
    interval_ms: int
    timestamp_ms: int
    elp: int
    pos_x_cm: int
    pos_y_cm: int
    speed_cms: int
    dir_cdeg: int
    max_p_cdbm: int
    min_p_cdbm: int
    pow_u_cdbm: int
    piggyback: bytes = field(default=b"")

    def validate(self) -> None:
        for name, bounds in (
            ("seq", _U32),
            ("interval_ms", _U16),
            ("timestamp_ms", _U64),
            ("elp", _U64),
            ("pos_x_cm", _I32),
            ("pos_y_cm", _I32),
            ("speed_cms", _I16),
            ("dir_cdeg", _U16),
            ("max_p_cdbm", _I16),
            ("min_p_cdbm", _I16),
            ("pow_u_cdbm", _I16),
        ):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool):
                raise InvalidField(f"{name} must be an int, got {type(value).__name__}")
            if not bounds[0] <= value <= bounds[1]:
                raise InvalidField(f"{name}={value} outside [{bounds[0]}, {bounds[1]}]")
        if not 100 <= self.interval_ms <= 500:
            raise InvalidField(f"interval_ms={self.interval_ms} outside [100, 500]")
        if self.dir_cdeg >= 36000:
            raise InvalidField(f"dir_cdeg={self.dir_cdeg} must be < 36000")
        if self.max_p_cdbm < self.min_p_cdbm:
            raise InvalidField(
                f"max_p_cdbm={self.max_p_cdbm} < min_p_cdbm={self.min_p_cdbm}"
            )
        if not isinstance(self.piggyback, (bytes, bytearray)):
            raise InvalidField("piggyback must be bytes")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Beacon):
            return NotImplemented
        return (
            self.seq == other.seq
            and self.interval_ms == other.interval_ms
            and self.timestamp_ms == other.timestamp_ms
            and self.elp == other.elp
            and self.pos_x_cm == other.pos_x_cm
            and self.pos_y_cm == other.pos_y_cm
            and self.speed_cms == other.speed_cms
            and self.dir_cdeg == other.dir_cdeg
            and self.max_p_cdbm == other.max_p_cdbm
            and self.min_p_cdbm == other.min_p_cdbm
            and self.pow_u_cdbm == other.pow_u_cdbm
            and bytes(self.piggyback).rstrip(b"\x00")
            == bytes(other.piggyback).rstrip(b"\x00")
        )


def encode_message(b: Beacon, total_size: int) -> bytes:
    """Encode ``b`` into a fixed-size message, zero-padding the piggyback region."""
    b.validate()
    region = total_size - HEADER_SIZE
    if len(b.piggyback) > region:
        raise InvalidField(
            f"piggyback of {len(b.piggyback)} bytes exceeds {region}-byte region"
        )
    header = _HEADER.pack(
        b.seq,
        b.interval_ms,
        b.timestamp_ms,
        b.elp,
        b.pos_x_cm,
        b.pos_y_cm,
        b.speed_cms,
        b.dir_cdeg,
        b.max_p_cdbm,
        b.min_p_cdbm,
        b.pow_u_cdbm,
    )
    return header + bytes(b.piggyback).ljust(region, b"\x00")


def decode_message(data: bytes, total_size: int) -> Beacon:
    """Inverse of :func:`encode_message`; the piggyback region is kept verbatim."""
    if len(data) != total_size:
        raise MalformedBeacon(f"expected {total_size} bytes, got {len(data)}")
    fields = _HEADER.unpack_from(data)
    b = Beacon(*fields, piggyback=bytes(data[HEADER_SIZE:]))
    try:
        b.validate()
    except InvalidField as exc:
        raise MalformedBeacon(str(exc)) from exc
    return b


def encode_beacon(b: Beacon) -> bytes:
    """Encode a safety beacon: exactly 100 bytes."""
    return encode_message(b, SAFETY_MESSAGE_SIZE)


def decode_beacon(data: bytes) -> Beacon:
    """Decode a 100-byte safety beacon."""
    return decode_message(data, SAFETY_MESSAGE_SIZE)
