"""Two-pass assembler and canonical disassembler for HVM1 source (.hasm).

Source grammar, one item per line, ';' starts a comment:
  label:                 binds the current address (code offset or data addr)
  .meta KEY VALUE...     container metadata (name, description, tags)
  .data [BASE]           switch to data emission at absolute BASE (default 0x1000)
  .code                  switch to code emission
  .entry LABEL|ADDR      program entry (default: first instruction)
  .ascii "..."  .asciiz "..."  .byte N,...  .word N,...  .space N
  mnemonic operands      e.g.  add r1, r2, 10   jeq r0, r3, done

ALU third operands may be a register or a literal; loads/stores are
`loadb rDst, rBase, off` / `storeb rBase, rSrc, off`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .image import build_container, load_image, ProgramImage
from .isa import (
    ALU_BINOPS, IMM_OPERAND, INSN_SIZE, Insn, MNEMONICS, OPCODE_NAMES,
    OPERAND_LAYOUT,
)


class AsmError(ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


class ParseError(AsmError):
    pass


class UndefinedLabelError(AsmError):
    def __init__(self, name: str, line: int | None = None) -> None:
        self.name = name
        super().__init__(f"undefined label {name!r}", line)


class DuplicateLabelError(AsmError):
    def __init__(self, name: str, line: int | None = None) -> None:
        self.name = name
        super().__init__(f"duplicate label {name!r}", line)


_LABEL_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")
_ESCAPES = {"n": "\n", "t": "\t", "r": "\r", "0": "\0", "\\": "\\", '"': '"'}


def _unquote(tok: str, line: int) -> bytes:
    if len(tok) < 2 or tok[0] != '"' or tok[-1] != '"':
        raise ParseError("expected quoted string", line)
    body = tok[1:-1]
    out = bytearray()
    i = 0
    while i < len(body):
        ch = body[i]
        if ch == "\\":
            i += 1
            if i >= len(body):
                raise ParseError("dangling escape", line)
            esc = body[i]
            if esc == "x":
                out.append(int(body[i + 1 : i + 3], 16))
                i += 2
            elif esc in _ESCAPES:
                out += _ESCAPES[esc].encode()
            else:
                raise ParseError(f"unknown escape \\{esc}", line)
        else:
            out += ch.encode("utf-8")
        i += 1
    return bytes(out)


@dataclass
class _PendingInsn:
    line: int
    mnemonic: str
    operands: list[str]


def _parse_int(tok: str, line: int) -> int:
    try:
        if len(tok) == 3 and tok[0] == "'" and tok[2] == "'":
            return ord(tok[1])
        if tok.startswith("'\\") and tok.endswith("'"):
            body = _ESCAPES.get(tok[2:-1])
            if body is None:
                raise ValueError(tok)
            return ord(body)
        return int(tok, 0)
    except ValueError:
        raise ParseError(f"bad integer {tok!r}", line) from None


class Assembler:
    def __init__(self) -> None:
        self.labels: dict[str, int] = {}
        self.meta: dict[str, str] = {}
        self.data = bytearray()
        self.data_base = 0x1000
        self.insns: list[_PendingInsn] = []
        self.entry_ref: str | None = None
        self._mode = "code"
        self._label_lines: dict[str, int] = {}
        self._data_fixups: list[tuple[int, str, int]] = []  # (offset, label, line)

    # pass 1: collect labels, meta, data bytes and pending instructions
    def _feed_line(self, raw: str, lineno: int) -> None:
        text = raw.split(";", 1)[0].strip()
        if not text:
            return
        while True:
            m = re.match(r"^([A-Za-z_][A-Za-z0-9_]*)\s*:\s*", text)
            if not m:
                break
            name = m.group(1)
            if name in self.labels:
                raise DuplicateLabelError(name, lineno)
            self.labels[name] = (
                len(self.insns) * INSN_SIZE
                if self._mode == "code"
                else self.data_base + len(self.data)
            )
            self._label_lines[name] = lineno
            text = text[m.end():]
        if not text:
            return
        if text.startswith("."):
            self._directive(text, lineno)
            return
        if self._mode != "code":
            raise ParseError("instruction in data section", lineno)
        parts = text.split(None, 1)
        mnem = parts[0].lower()
        if mnem not in MNEMONICS:
            raise ParseError(f"unknown mnemonic {mnem!r}", lineno)
        ops = [o.strip() for o in parts[1].split(",")] if len(parts) > 1 else []
        self.insns.append(_PendingInsn(lineno, mnem, ops))

    def _directive(self, text: str, lineno: int) -> None:
        parts = text.split(None, 1)
        name = parts[0].lower()
        rest = parts[1] if len(parts) > 1 else ""
        if name == ".meta":
            kv = rest.split(None, 1)
            if not kv:
                raise ParseError(".meta needs a key", lineno)
            self.meta[kv[0]] = kv[1] if len(kv) > 1 else ""
        elif name == ".data":
            self._mode = "data"
            if rest:
                self.data_base = _parse_int(rest.strip(), lineno)
            if self.data:
                raise ParseError("only one .data section is supported", lineno)
        elif name == ".code":
            self._mode = "code"
        elif name == ".entry":
            self.entry_ref = rest.strip()
        elif name in (".ascii", ".asciiz"):
            if self._mode != "data":
                raise ParseError(f"{name} outside .data", lineno)
            self.data += _unquote(rest.strip(), lineno)
            if name == ".asciiz":
                self.data.append(0)
        elif name == ".byte":
            if self._mode != "data":
                raise ParseError(".byte outside .data", lineno)
            for tok in rest.split(","):
                v = _parse_int(tok.strip(), lineno)
                if not 0 <= v <= 0xFF:
                    raise ParseError(f"byte out of range: {v}", lineno)
                self.data.append(v)
        elif name == ".word":
            if self._mode != "data":
                raise ParseError(".word outside .data", lineno)
            for tok in rest.split(","):
                tok = tok.strip()
                if _LABEL_RE.match(tok) and not re.fullmatch(r"r[0-7]", tok):
                    self._data_fixups.append((len(self.data), tok, lineno))
                    self.data += b"\x00\x00\x00\x00"
                else:
                    self.data += (_parse_int(tok, lineno) & 0xFFFFFFFF).to_bytes(4, "little")
        elif name == ".space":
            if self._mode != "data":
                raise ParseError(".space outside .data", lineno)
            self.data += bytes(_parse_int(rest.strip(), lineno))
        else:
            raise ParseError(f"unknown directive {name}", lineno)

    # pass 2: resolve operands
    def _resolve_value(self, tok: str, lineno: int) -> int:
        if _LABEL_RE.match(tok):
            if tok in self.labels:
                return self.labels[tok]
            if re.fullmatch(r"r[0-7]", tok):
                raise ParseError(f"register {tok} where a value is expected", lineno)
            raise UndefinedLabelError(tok, lineno)
        return _parse_int(tok, lineno)

    def _encode(self, p: _PendingInsn) -> Insn:
        op = MNEMONICS[p.mnemonic]
        layout = OPERAND_LAYOUT[op]
        ops = list(p.operands)
        if op == MNEMONICS["halt"] and not ops:
            ops = ["0"]
        if len(ops) != len(layout):
            raise ParseError(
                f"{p.mnemonic} expects {len(layout)} operands, got {len(ops)}", p.line
            )
        a = b = c = 0
        imm = 0
        for slot, tok in zip(layout, ops):
            if slot in ("a", "b"):
                m = re.fullmatch(r"r([0-7])", tok.lower())
                if not m:
                    raise ParseError(f"expected register, got {tok!r}", p.line)
                if slot == "a":
                    a = int(m.group(1))
                else:
                    b = int(m.group(1))
            elif slot == "c":
                m = re.fullmatch(r"r([0-7])", tok.lower())
                if m:
                    c = int(m.group(1))
                else:
                    c = IMM_OPERAND
                    imm = self._resolve_value(tok, p.line)
            else:  # imm
                imm = self._resolve_value(tok, p.line)
        return Insn(op, a, b, c, imm if imm < 0x80000000 else imm - 0x100000000)

    def assemble(self, source: str) -> bytes:
        for lineno, raw in enumerate(source.splitlines(), 1):
            self._feed_line(raw, lineno)
        if not self.insns:
            raise ParseError("no instructions", 0)
        for off, label, lineno in self._data_fixups:
            if label not in self.labels:
                raise UndefinedLabelError(label, lineno)
            self.data[off : off + 4] = (self.labels[label] & 0xFFFFFFFF).to_bytes(4, "little")
        insns = [self._encode(p) for p in self.insns]
        entry = 0
        if self.entry_ref:
            if _LABEL_RE.match(self.entry_ref):
                if self.entry_ref not in self.labels:
                    raise UndefinedLabelError(self.entry_ref, 0)
                entry = self.labels[self.entry_ref]
            else:
                entry = _parse_int(self.entry_ref, 0)
        return build_container(
            insns, entry, bytes(self.data), self.data_base, self.meta or None
        )


def assemble(source: str) -> bytes:
    """Assemble source text into container bytes; load_image(assemble(s))
    always succeeds for accepted sources."""
    return Assembler().assemble(source)


def disassemble(blob: bytes) -> str:
    """Canonical textual form: label-free, numeric operands, data lowered to
    .byte lines.  Output re-assembles to the identical container."""
    img = load_image(blob)
    lines: list[str] = []
    for key in sorted(img_meta(img)):
        lines.append(f".meta {key} {img_meta(img)[key]}")
    if img.data:
        lines.append(f".data {img.data_base}")
        blob_bytes = img.data
        for off in range(0, len(blob_bytes), 12):
            chunk = blob_bytes[off : off + 12]
            lines.append(".byte " + ", ".join(str(x) for x in chunk))
    lines.append(".code")
    lines.append(f".entry {img.entry}")
    for insn in img.insns:
        lines.append(format_insn(insn))
    return "\n".join(lines) + "\n"


def img_meta(img: ProgramImage) -> dict[str, str]:
    meta: dict[str, str] = {}
    if img.name:
        meta["name"] = img.name
    if img.description:
        meta["description"] = img.description
    if img.semantic_tags:
        meta["tags"] = " ".join(img.semantic_tags)
    return meta


def format_insn(insn: Insn) -> str:
    name = OPCODE_NAMES[insn.op]
    layout = OPERAND_LAYOUT[insn.op]
    parts: list[str] = []
    for slot in layout:
        if slot == "a":
            parts.append(f"r{insn.a}")
        elif slot == "b":
            parts.append(f"r{insn.b}")
        elif slot == "c":
            if insn.c == IMM_OPERAND:
                parts.append(str(insn.imm & 0xFFFFFFFF))
            else:
                parts.append(f"r{insn.c}")
        else:
            parts.append(str(insn.imm & 0xFFFFFFFF))
    return name + (" " + ", ".join(parts) if parts else "")


def canonical_tokens(source: str) -> list[str]:
    """Lower source to canonical tokens without going through the container:
    comments and labels stripped, label operands resolved, data directives
    lowered to bytes.  disassemble(assemble(s)) must yield the same tokens."""
    asm = Assembler()
    for lineno, raw in enumerate(source.splitlines(), 1):
        asm._feed_line(raw, lineno)
    toks: list[str] = []
    for key in sorted(asm.meta):
        toks += _tokenize(f".meta {key} {asm.meta[key]}")
    if asm.data:
        toks += [".data", str(asm.data_base)]
        for off in range(0, len(asm.data), 12):
            toks.append(".byte")
            toks += [str(x) for x in asm.data[off : off + 12]]
    toks.append(".code")
    entry = 0
    if asm.entry_ref:
        entry = asm.labels.get(asm.entry_ref, None)
        if entry is None:
            entry = _parse_int(asm.entry_ref, 0)
    toks += [".entry", str(entry)]
    for pending in asm.insns:
        toks += _tokenize(format_insn(asm._encode(pending)))
    return toks


def _tokenize(text: str) -> list[str]:
    toks: list[str] = []
    for line in text.splitlines():
        body = line.split(";", 1)[0]
        for tok in re.split(r"[\s,]+", body):
            if tok:
                toks.append(tok)
    return toks


def disassembly_tokens(blob: bytes) -> list[str]:
    return _tokenize(disassemble(blob))
