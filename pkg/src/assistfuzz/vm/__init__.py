"""HVM1: the deterministic micro-VM that challenge programs run on."""

from .assembler import (
    AsmError, Assembler, DuplicateLabelError, ParseError, UndefinedLabelError,
    assemble, canonical_tokens, disassemble, disassembly_tokens,
)
from .image import MalformedContainerError, ProgramImage, build_container, load_image
from .isa import INSN_SIZE, MEM_SIZE, Insn, InvalidCodeError
from .machine import (
    CRASHED, EXITED, INPUT_EXHAUSTED, NEED_INPUT, STEP_LIMIT,
    CompareRecord, CrashInfo, ExecutionResult, Machine, Session,
    SessionClosedError, ShadowDomain, TAINT, VmLimits,
    execute, execute_interactive,
)

__all__ = [
    "AsmError", "Assembler", "DuplicateLabelError", "ParseError",
    "UndefinedLabelError", "assemble", "canonical_tokens", "disassemble",
    "disassembly_tokens", "MalformedContainerError", "ProgramImage",
    "build_container", "load_image", "INSN_SIZE", "MEM_SIZE", "Insn",
    "InvalidCodeError", "CRASHED", "EXITED", "INPUT_EXHAUSTED", "NEED_INPUT",
    "STEP_LIMIT", "CompareRecord", "CrashInfo", "ExecutionResult", "Machine",
    "Session", "SessionClosedError", "ShadowDomain", "TAINT", "VmLimits",
    "execute", "execute_interactive",
]
