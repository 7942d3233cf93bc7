"""HVM1 instruction set: encoding tables shared by the assembler, loader and interpreter.

HVM1 is a 32-bit little-endian machine with eight general registers r0-r7,
a flat 1 MiB data memory and a separate code space addressed in bytes.
Every instruction is 8 bytes: opcode u8, regA u8, regB u8, regC u8, imm i32.

Binary ALU ops take their second source from regC, or from imm when the
regC field is the sentinel IMM_OPERAND (written as a literal in assembly).
"""

from __future__ import annotations

import struct
from typing import NamedTuple

MEM_SIZE = 0x100000  # 1 MiB flat data memory
INSN_SIZE = 8
NUM_REGS = 8
IMM_OPERAND = 0xFF  # regC sentinel: second ALU source is imm
CALL_STACK_MAX = 256

INSN_STRUCT = struct.Struct("<BBBBi")

# opcodes
MOVI = 0x01
MOV = 0x02
LOADB = 0x03
STOREB = 0x04
LOADW = 0x05
STOREW = 0x06
ADD = 0x07
SUB = 0x08
MUL = 0x09
DIVU = 0x0A
AND = 0x0B
OR = 0x0C
XOR = 0x0D
SHL = 0x0E
SHR = 0x0F
JMP = 0x10
JEQ = 0x11
JNE = 0x12
JLTU = 0x13
JGEU = 0x14
CALL = 0x15
RET = 0x16
HALT = 0x17
SYS = 0x18

ALU_BINOPS = frozenset({ADD, SUB, MUL, DIVU, AND, OR, XOR, SHL, SHR})
COND_JUMPS = frozenset({JEQ, JNE, JLTU, JGEU})
# any instruction after which control does not simply fall through
BLOCK_ENDERS = frozenset({JMP, JEQ, JNE, JLTU, JGEU, CALL, RET, HALT})

BRANCH_KIND = {JEQ: "eq", JNE: "ne", JLTU: "ltu", JGEU: "geu"}

# syscall numbers (SYS imm)
SYS_TERMINATE = 0
SYS_TRANSMIT = 1
SYS_RECEIVE = 2
SYS_RANDOM = 3
SYS_ALLOCATE = 4
SYS_DEALLOCATE = 5
SYS_FDWAIT = 6
SYS_MAX = 6

MNEMONICS = {
    "movi": MOVI, "mov": MOV,
    "loadb": LOADB, "storeb": STOREB, "loadw": LOADW, "storew": STOREW,
    "add": ADD, "sub": SUB, "mul": MUL, "divu": DIVU,
    "and": AND, "or": OR, "xor": XOR, "shl": SHL, "shr": SHR,
    "jmp": JMP, "jeq": JEQ, "jne": JNE, "jltu": JLTU, "jgeu": JGEU,
    "call": CALL, "ret": RET, "halt": HALT, "sys": SYS,
}
OPCODE_NAMES = {v: k for k, v in MNEMONICS.items()}

# operand layout per opcode: which fields the instruction uses
# r = register field, i = imm, c = ALU second source (reg or literal)
OPERAND_LAYOUT = {
    MOVI: ("a", "i"),
    MOV: ("a", "b"),
    LOADB: ("a", "b", "i"),
    STOREB: ("a", "b", "i"),
    LOADW: ("a", "b", "i"),
    STOREW: ("a", "b", "i"),
    JMP: ("i",),
    JEQ: ("a", "b", "i"),
    JNE: ("a", "b", "i"),
    JLTU: ("a", "b", "i"),
    JGEU: ("a", "b", "i"),
    CALL: ("i",),
    RET: (),
    HALT: ("i",),
    SYS: ("i",),
}
for _op in ALU_BINOPS:
    OPERAND_LAYOUT[_op] = ("a", "b", "c")


class Insn(NamedTuple):
    op: int
    a: int
    b: int
    c: int
    imm: int  # signed as stored; mask with 0xFFFFFFFF for unsigned use


def encode_insn(insn: Insn) -> bytes:
    imm = insn.imm & 0xFFFFFFFF
    if imm >= 0x80000000:
        imm -= 0x100000000
    return INSN_STRUCT.pack(insn.op, insn.a, insn.b, insn.c, imm)


def decode_insn(raw: bytes, offset: int = 0) -> Insn:
    return Insn(*INSN_STRUCT.unpack_from(raw, offset))


class InvalidCodeError(ValueError):
    """Instruction stream fails static validation."""


def _check_reg(val: int, pos: str, addr: int) -> None:
    if not 0 <= val < NUM_REGS:
        raise InvalidCodeError(f"bad register field {pos}={val} at 0x{addr:x}")


def validate_code(insns: list[Insn], entry: int) -> None:
    """Static validation: known opcodes, register fields in range, jump/call
    targets on instruction boundaries inside the code section, syscall
    numbers in range.  Unused fields must be zero so every valid instruction
    has exactly one encoding."""
    code_len = len(insns) * INSN_SIZE
    if entry % INSN_SIZE or not 0 <= entry < code_len:
        raise InvalidCodeError(f"entry 0x{entry:x} is not an instruction boundary")
    for idx, insn in enumerate(insns):
        addr = idx * INSN_SIZE
        layout = OPERAND_LAYOUT.get(insn.op)
        if layout is None:
            raise InvalidCodeError(f"unknown opcode 0x{insn.op:02x} at 0x{addr:x}")
        used = set(layout)
        if "a" in used:
            _check_reg(insn.a, "a", addr)
        elif insn.a:
            raise InvalidCodeError(f"nonzero unused field a at 0x{addr:x}")
        if "b" in used:
            _check_reg(insn.b, "b", addr)
        elif insn.b:
            raise InvalidCodeError(f"nonzero unused field b at 0x{addr:x}")
        if "c" in used:
            if insn.c != IMM_OPERAND:
                _check_reg(insn.c, "c", addr)
        elif insn.c:
            raise InvalidCodeError(f"nonzero unused field c at 0x{addr:x}")
        if "i" not in used and "c" not in used and insn.imm:
            raise InvalidCodeError(f"nonzero unused imm at 0x{addr:x}")
        if insn.op in ALU_BINOPS and insn.c != IMM_OPERAND and insn.imm:
            raise InvalidCodeError(f"nonzero imm with register operand at 0x{addr:x}")
        if insn.op in COND_JUMPS or insn.op in (JMP, CALL):
            target = insn.imm & 0xFFFFFFFF
            if target % INSN_SIZE or target >= code_len:
                raise InvalidCodeError(
                    f"jump target 0x{target:x} at 0x{addr:x} not an instruction boundary"
                )
        if insn.op == SYS and not 0 <= insn.imm <= SYS_MAX:
            raise InvalidCodeError(f"unknown syscall {insn.imm} at 0x{addr:x}")


def block_map(insns: list[Insn], entry: int) -> tuple[list[int], list[int]]:
    """Compute basic-block structure.

    Returns (leaders, block_of): sorted leader addresses, and a per-instruction
    table mapping instruction index to the start address of its block.
    Blocks are delimited by control-flow instructions and their targets.
    """
    n = len(insns)
    leader_set = {0, entry} if n else {entry}
    for idx, insn in enumerate(insns):
        if insn.op in (JMP, CALL) or insn.op in COND_JUMPS:
            leader_set.add(insn.imm & 0xFFFFFFFF)
        if insn.op in BLOCK_ENDERS and idx + 1 < n:
            leader_set.add((idx + 1) * INSN_SIZE)
    leaders = sorted(a for a in leader_set if 0 <= a < n * INSN_SIZE)
    block_of: list[int] = [0] * n
    cur = 0
    lset = set(leaders)
    for idx in range(n):
        addr = idx * INSN_SIZE
        if addr in lset:
            cur = addr
        block_of[idx] = cur
    return leaders, block_of
