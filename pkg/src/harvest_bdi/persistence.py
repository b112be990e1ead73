"""Persist/restore of lifetime-annotated beliefs on simulated FRAM and flash.

Image layout (little-endian)::

    magic    4s   b"HBDI"
    version  u8   FORMAT_VERSION
    medium   u8   1 = fram, 2 = flash
    length   u32  payload byte count
    crc32    u32  CRC-32 of payload
    payload       concatenated records

Each record is ``u32 length`` followed by the literal: ``u8 flags``
(bit 0 = negated), functor, ``u8 arity``, arguments, ``u8 annotation
count`` and annotations (functor, ``u8 arity``, arguments).  Strings are
``u16 length`` + UTF-8.  A term is one tag byte followed by its value:
``N`` f64, ``A`` string, ``S`` string, ``T`` functor + ``u8 arity`` + args.

Only the payload is billed: an empty belief list costs nothing.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

from .asl import Annotation, Atom, Literal, Number, String, Structure, is_ground
from .beliefs import BeliefEntry, Lifetime, Origin

__all__ = [
    "FORMAT_VERSION", "PersistImage", "MediumProfile", "NonVolatileStore",
    "CorruptImageError", "VersionError", "SerializationError", "InsufficientEnergy",
    "encode_image", "decode_image", "persist", "restore", "canonical_order",
]

FORMAT_VERSION = 1
MAGIC = b"HBDI"
_HEADER = struct.Struct("<4sBBII")
_MEDIUM_CODES = {Lifetime.FRAM: 1, Lifetime.FLASH: 2}
_CODE_MEDIA = {v: k for k, v in _MEDIUM_CODES.items()}


class CorruptImageError(ValueError):
    pass


class VersionError(ValueError):
    pass


class SerializationError(ValueError):
    pass


class InsufficientEnergy(RuntimeError):
    """The buffer cannot fund a non-volatile write; nothing was written or billed."""


@dataclass(frozen=True)
class MediumProfile:
    write_cost: float  # µJ/byte
    read_cost: float  # µJ/byte
    write_latency: float = 0.0  # ms/byte

    def __post_init__(self):
        if min(self.write_cost, self.read_cost, self.write_latency) < 0:
            raise ValueError("medium costs must be non-negative")


DEFAULT_PROFILES = {
    Lifetime.FRAM: MediumProfile(write_cost=0.01, read_cost=0.005, write_latency=0.0),
    Lifetime.FLASH: MediumProfile(write_cost=0.2, read_cost=0.01, write_latency=0.05),
}


@dataclass(frozen=True)
class PersistImage:
    medium: Lifetime
    payload: bytes
    checksum: int
    version: int = FORMAT_VERSION

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(MAGIC, self.version, _MEDIUM_CODES[self.medium],
                              len(self.payload), self.checksum)
        return header + self.payload

    @property
    def size(self) -> int:
        return len(self.payload)


# -- encoding ----------------------------------------------------------------


def _str(text: str) -> bytes:
    raw = text.encode("utf-8")
    return struct.pack("<H", len(raw)) + raw


def _term(term) -> bytes:
    if isinstance(term, Number):
        return b"N" + struct.pack("<d", term.value)
    if isinstance(term, Atom):
        return b"A" + _str(term.name)
    if isinstance(term, String):
        return b"S" + _str(term.value)
    if isinstance(term, Structure):
        return b"T" + _str(term.functor) + struct.pack("<B", len(term.args)) + b"".join(
            _term(a) for a in term.args)
    raise SerializationError(f"cannot serialize term {term!r}")


def _literal(lit: Literal) -> bytes:
    out = [struct.pack("<B", int(lit.negated)), _str(lit.functor),
           struct.pack("<B", lit.arity)]
    out.extend(_term(a) for a in lit.args)
    out.append(struct.pack("<B", len(lit.annotations)))
    for ann in lit.annotations:
        out.append(_str(ann.functor) + struct.pack("<B", len(ann.args)))
        out.extend(_term(a) for a in ann.args)
    return b"".join(out)


def _term_key(term):
    if isinstance(term, Number):
        return (0, term.value)
    if isinstance(term, Atom):
        return (1, term.name)
    if isinstance(term, String):
        return (2, term.value)
    return (3, term.functor, len(term.args), tuple(_term_key(a) for a in term.args))


def _literal_key(lit: Literal):
    return (lit.functor, lit.arity, tuple(_term_key(a) for a in lit.args), lit.negated,
            tuple((a.functor, tuple(_term_key(x) for x in a.args)) for a in lit.annotations))


def canonical_order(entries):
    """Sort by functor, arity, then arguments."""
    return sorted(entries, key=lambda e: _literal_key(e.literal))


def encode_image(entries, medium: Lifetime) -> PersistImage:
    for entry in entries:
        if not is_ground(entry.literal):
            raise SerializationError(f"belief {entry.literal} is not ground")
    records = []
    for entry in canonical_order(entries):
        body = _literal(entry.literal)
        records.append(struct.pack("<I", len(body)) + body)
    payload = b"".join(records)
    return PersistImage(medium, payload, zlib.crc32(payload))


# -- decoding ----------------------------------------------------------------


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise CorruptImageError("truncated record")
        value = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return value[0] if len(value) == 1 else value

    def text(self) -> str:
        n = self.take("<H")
        raw = self.data[self.pos:self.pos + n]
        if len(raw) != n:
            raise CorruptImageError("truncated string")
        self.pos += n
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CorruptImageError("invalid UTF-8 in image") from exc

    def term(self):
        tag = self.take("<c")
        if tag == b"N":
            return Number(self.take("<d"))
        if tag == b"A":
            return Atom(self.text())
        if tag == b"S":
            return String(self.text())
        if tag == b"T":
            functor = self.text()
            return Structure(functor, tuple(self.term() for _ in range(self.take("<B"))))
        raise CorruptImageError(f"unknown term tag {tag!r}")

    def literal(self) -> Literal:
        negated = bool(self.take("<B"))
        functor = self.text()
        args = tuple(self.term() for _ in range(self.take("<B")))
        anns = []
        for _ in range(self.take("<B")):
            name = self.text()
            anns.append(Annotation(name, tuple(self.term() for _ in range(self.take("<B")))))
        return Literal(functor, args, tuple(anns), negated)


def decode_image(data: bytes) -> PersistImage:
    """Parse header and payload bytes; the checksum is not verified here."""
    if len(data) < _HEADER.size:
        raise CorruptImageError("image shorter than header")
    magic, version, code, length, checksum = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptImageError("bad magic")
    if version != FORMAT_VERSION:
        raise VersionError(f"unsupported image version {version}")
    if code not in _CODE_MEDIA:
        raise CorruptImageError(f"unknown medium code {code}")
    payload = data[_HEADER.size:]
    if len(payload) != length:
        raise CorruptImageError("payload length mismatch")
    return PersistImage(_CODE_MEDIA[code], payload, checksum, version)


def _decode_payload(payload: bytes, medium: Lifetime) -> list[BeliefEntry]:
    reader = _Reader(payload)
    out = []
    while reader.pos < len(payload):
        n = reader.take("<I")
        end = reader.pos + n
        lit = reader.literal()
        if reader.pos != end:
            raise CorruptImageError("record length mismatch")
        out.append(BeliefEntry(lit, medium, Origin.RUNTIME))
    return out


# -- billed operations -------------------------------------------------------


def persist(entries, medium: Lifetime, profile: MediumProfile, platform) -> PersistImage:
    """Serialize ``entries`` and bill the write to ``platform``, all or nothing."""
    for entry in entries:
        if entry.lifetime is not medium:
            raise ValueError(f"{entry.literal} has lifetime {entry.lifetime.value}, "
                             f"not {medium.value}")
    image = encode_image(entries, medium)
    cost = image.size * profile.write_cost
    if not platform.can_fund(cost):
        raise InsufficientEnergy(
            f"persisting {image.size} bytes to {medium.value} needs {cost:.3f} uJ")
    platform.bill(cost, math.ceil(image.size * profile.write_latency), "persist")
    return image


def restore(image: PersistImage | bytes, profile: MediumProfile, platform) -> list[BeliefEntry]:
    """Bill the read, verify the checksum and decode the beliefs in image order."""
    if isinstance(image, (bytes, bytearray)):
        image = decode_image(bytes(image))
    if image.version != FORMAT_VERSION:
        raise VersionError(f"unsupported image version {image.version}")
    platform.bill(image.size * profile.read_cost, 0, "restore")
    if zlib.crc32(image.payload) != image.checksum:
        raise CorruptImageError(f"{image.medium.value} image checksum mismatch")
    return _decode_payload(image.payload, image.medium)


class NonVolatileStore:
    """Two image slots per medium; a write lands in the idle slot, then flips.

    Survives deep sleep and brown-out.  ``read`` returns the raw bytes of
    the most recent complete write, or None if the medium was never written.
    """

    def __init__(self):
        self._slots = {m: [None, None] for m in _MEDIUM_CODES}
        self._active = {m: None for m in _MEDIUM_CODES}

    def write(self, image: PersistImage) -> None:
        current = self._active[image.medium]
        target = 0 if current is None else 1 - current
        self._slots[image.medium][target] = image.to_bytes()
        self._active[image.medium] = target

    def read(self, medium: Lifetime) -> bytes | None:
        current = self._active[medium]
        return None if current is None else self._slots[medium][current]

    def corrupt(self, medium: Lifetime, offset: int = 0, mask: int = 0x01) -> None:
        """Flip bits in one payload byte of the active image (fault injection)."""
        current = self._active[medium]
        if current is None:
            raise LookupError(f"no {medium.value} image stored")
        data = bytearray(self._slots[medium][current])
        data[_HEADER.size + offset] ^= mask
        self._slots[medium][current] = bytes(data)

    def dump(self, directory: str | Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for medium in _MEDIUM_CODES:
            data = self.read(medium)
            if data is not None:
                path = directory / f"{medium.value}.img"
                path.write_bytes(data)
                written.append(path)
        return written
