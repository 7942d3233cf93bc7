"""HVM1 container format and the loadable ProgramImage.

Container layout (bit-exact):
  magic "HVM1" (4 bytes), version u16 LE = 1, section count u16 LE,
  then sections, each: tag (4 bytes), length u32 LE, payload.
  CODE payload = entry u32 LE followed by 8-byte instructions.
  DATA payload = load_base u32 LE followed by the blob.
  META payload = UTF-8 key=value lines (name, description, tags).
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

from .isa import INSN_SIZE, MEM_SIZE, Insn, InvalidCodeError, block_map, decode_insn, encode_insn, validate_code

MAGIC = b"HVM1"
VERSION = 1
HEADER = struct.Struct("<4sHH")
SECTION_HDR = struct.Struct("<4sI")
KNOWN_TAGS = (b"CODE", b"DATA", b"META")


class MalformedContainerError(ValueError):
    """Container bytes fail structural validation (magic, section framing)."""


@dataclass(frozen=True)
class ProgramImage:
    """A validated, executable challenge program."""

    id: str
    name: str
    description: str
    insns: tuple[Insn, ...]
    entry: int
    data: bytes
    data_base: int
    semantic_tags: tuple[str, ...] = ()
    raw: bytes = b""
    # static block structure, derived at load time
    leaders: tuple[int, ...] = ()
    block_of: tuple[int, ...] = field(default=(), repr=False)

    @property
    def code_len(self) -> int:
        return len(self.insns) * INSN_SIZE

    @property
    def num_blocks(self) -> int:
        return len(self.leaders)

    def block_at(self, pc: int) -> int:
        return self.block_of[pc // INSN_SIZE]


def build_container(
    insns: list[Insn],
    entry: int,
    data: bytes = b"",
    data_base: int = 0x1000,
    meta: dict[str, str] | None = None,
) -> bytes:
    """Serialize sections in canonical order (CODE, DATA, META)."""
    sections: list[tuple[bytes, bytes]] = []
    code_payload = struct.pack("<I", entry) + b"".join(encode_insn(i) for i in insns)
    sections.append((b"CODE", code_payload))
    if data:
        sections.append((b"DATA", struct.pack("<I", data_base) + data))
    if meta:
        lines = "".join(f"{k}={v}\n" for k, v in sorted(meta.items()))
        sections.append((b"META", lines.encode("utf-8")))
    out = bytearray(HEADER.pack(MAGIC, VERSION, len(sections)))
    for tag, payload in sections:
        out += SECTION_HDR.pack(tag, len(payload))
        out += payload
    return bytes(out)


def load_image(blob: bytes) -> ProgramImage:
    """Parse and fully validate a container; every image invariant is
    checked here so execution never sees a malformed program."""
    if len(blob) < HEADER.size or blob[:4] != MAGIC:
        raise MalformedContainerError("bad magic")
    _, version, count = HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise MalformedContainerError(f"unsupported version {version}")
    off = HEADER.size
    seen: dict[bytes, bytes] = {}
    for _ in range(count):
        if off + SECTION_HDR.size > len(blob):
            raise MalformedContainerError("truncated section header")
        tag, length = SECTION_HDR.unpack_from(blob, off)
        off += SECTION_HDR.size
        if tag not in KNOWN_TAGS:
            raise MalformedContainerError(f"unknown section tag {tag!r}")
        if tag in seen:
            raise MalformedContainerError(f"duplicate section {tag!r}")
        if off + length > len(blob):
            raise MalformedContainerError(f"truncated {tag.decode()} section")
        seen[tag] = blob[off : off + length]
        off += length
    if off != len(blob):
        raise MalformedContainerError("trailing bytes after last section")
    if b"CODE" not in seen:
        raise MalformedContainerError("missing CODE section")

    code = seen[b"CODE"]
    if len(code) < 4 or (len(code) - 4) % INSN_SIZE:
        raise MalformedContainerError("CODE payload not a whole number of instructions")
    entry = struct.unpack_from("<I", code, 0)[0]
    insns = [decode_insn(code, 4 + i * INSN_SIZE) for i in range((len(code) - 4) // INSN_SIZE)]
    if not insns:
        raise InvalidCodeError("empty code section")
    validate_code(insns, entry)

    data = b""
    data_base = 0
    if b"DATA" in seen:
        payload = seen[b"DATA"]
        if len(payload) < 4:
            raise MalformedContainerError("truncated DATA section")
        data_base = struct.unpack_from("<I", payload, 0)[0]
        data = payload[4:]
        if data_base + len(data) > MEM_SIZE:
            raise MalformedContainerError("DATA blob does not fit in memory")

    meta: dict[str, str] = {}
    if b"META" in seen:
        try:
            text = seen[b"META"].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedContainerError("META is not UTF-8") from exc
        for line in text.splitlines():
            if line and "=" in line:
                key, val = line.split("=", 1)
                meta[key] = val

    leaders, block_of = block_map(insns, entry)
    tags = tuple(t for t in meta.get("tags", "").split() if t)
    return ProgramImage(
        id=hashlib.sha256(blob).hexdigest(),
        name=meta.get("name", ""),
        description=meta.get("description", ""),
        insns=tuple(insns),
        entry=entry,
        data=data,
        data_base=data_base,
        semantic_tags=tags,
        raw=blob,
        leaders=tuple(leaders),
        block_of=tuple(block_of),
    )
