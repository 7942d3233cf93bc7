"""The HVM1 interpreter: deterministic execution with edge coverage,
input-taint tracking and compare logging.

One step loop serves three uses: the fuzzer hot path (no tracking), the
public execute() contract (taint sets + compare log), and concolic shadow
tracing (a ShadowDomain plugs in symbolic expressions; see concolic.symex).
Taint and shadow values ride the same rails: a register/memory byte carries
None when input-independent, otherwise a domain value whose deps() are the
input byte indices it derives from.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

from .image import ProgramImage
from .isa import (
    ADD, AND, BRANCH_KIND, CALL, CALL_STACK_MAX, DIVU, HALT, IMM_OPERAND,
    INSN_SIZE, JEQ, JGEU, JLTU, JMP, JNE, LOADB, LOADW, MEM_SIZE, MOV, MOVI,
    MUL, OR, RET, SHL, SHR, STOREB, STOREW, SUB, SYS, SYS_ALLOCATE,
    SYS_DEALLOCATE, SYS_FDWAIT, SYS_RANDOM, SYS_RECEIVE, SYS_TERMINATE,
    SYS_TRANSMIT, XOR,
)

M32 = 0xFFFFFFFF
M64 = 0xFFFFFFFFFFFFFFFF
HEAP_BASE = 0xC0000
_ZERO_MEM = bytes(MEM_SIZE)

# terminal statuses
EXITED = "exited"
CRASHED = "crashed"
STEP_LIMIT = "step_limit"
INPUT_EXHAUSTED = "input_exhausted"
NEED_INPUT = "need_input"  # internal: session is blocked on receive


@dataclass(frozen=True)
class VmLimits:
    max_steps: int = 5_000_000
    max_output: int = 1 << 20
    rng_seed: int = 0
    wall_timeout: float | None = None  # interactive sessions only
    compare_log_cap: int = 65536

    def __post_init__(self) -> None:
        if self.max_steps <= 0 or self.max_output <= 0:
            raise ValueError("max_steps and max_output must be positive")


@dataclass(frozen=True)
class CrashInfo:
    kind: str  # oob_load | oob_store | div_zero | invalid_opcode | invalid_jump | call_overflow
    pc: int
    block: int


@dataclass(frozen=True)
class CompareRecord:
    pc: int
    kind: str  # eq | ne | ltu | geu
    lhs_value: int
    rhs_value: int
    lhs_input_deps: frozenset[int]
    rhs_input_deps: frozenset[int]
    # source data address when the operand is an untainted value loaded from
    # memory; lets string hints attribute compare constants to data strings
    lhs_data_addr: int | None = None
    rhs_data_addr: int | None = None


@dataclass(frozen=True)
class ExecutionResult:
    status: str
    output: bytes
    coverage: frozenset[tuple[int, int]]
    compare_log: tuple[CompareRecord, ...]
    steps: int
    exit_code: int | None = None
    crash: CrashInfo | None = None


class SessionClosedError(RuntimeError):
    """feed() after the target terminated or the session was closed."""


class ShadowDomain:
    """Propagation rules for shadow values; the taint domain is built in,
    symbolic expressions subclass this."""

    def from_input(self, index: int, value: int) -> Any:
        return frozenset((index,))

    def binop(self, op: int, sa: Any, va: int, sb: Any, vb: int, result: int) -> Any:
        if sa is None:
            return sb
        if sb is None:
            return sa
        return sa | sb

    def combine_bytes(self, shadows: list[Any], values: bytes, result: int) -> Any:
        acc = None
        for s in shadows:
            if s is not None:
                acc = s if acc is None else acc | s
        return acc

    def trunc_byte(self, s: Any, value: int) -> Any:
        return s

    def split_bytes(self, s: Any, value: int) -> list[Any]:
        return [s, s, s, s]

    def opaque_load(self, addr_shadow: Any, value: int) -> Any:
        # load through an input-dependent address: the result depends on
        # input only via the address; symbolic shadows degrade to opaque
        return addr_shadow

    def deps(self, s: Any) -> frozenset[int]:
        return s if s is not None else frozenset()

    def on_branch(self, pc: int, kind: str, sa: Any, va: int, sb: Any, vb: int, taken: bool) -> None:
        """Hook for predicate collection; default does nothing."""


TAINT = ShadowDomain()


class Machine:
    """One reusable VM instance for a fixed program.

    Instances are independent; a single instance must not be shared by
    concurrent callers.  reset() restores pristine state cheaply by undoing
    only dirtied memory.
    """

    def __init__(self, program: ProgramImage, limits: VmLimits | None = None) -> None:
        self.program = program
        self.limits = limits or VmLimits()
        self._code = [tuple(i) for i in program.insns]
        n = len(self._code)
        self._is_leader = [False] * n
        for addr in program.leaders:
            self._is_leader[addr // INSN_SIZE] = True
        self._block_of = list(program.block_of)
        self.mem = bytearray(MEM_SIZE)  # fresh bytearray is already zeroed
        self._dirty: list[tuple[int, int]] = []
        self.reset()

    # -- lifecycle ---------------------------------------------------------

    def reset(self, limits: VmLimits | None = None, domain: ShadowDomain | None = None) -> None:
        if limits is not None:
            self.limits = limits
        mem = self.mem
        if len(self._dirty) > 2048:
            mem[:] = _ZERO_MEM
        else:
            for addr, ln in self._dirty:
                mem[addr : addr + ln] = _ZERO_MEM[: ln]
        self._dirty = []
        prog = self.program
        if prog.data:
            mem[prog.data_base : prog.data_base + len(prog.data)] = prog.data
            self._dirty.append((prog.data_base, len(prog.data)))
        self.regs = [0] * 8
        self.pc = prog.entry
        self.steps = 0
        self.output = bytearray()
        self.coverage: set[tuple[int, int]] = set()
        self.cur_block = prog.entry
        self.call_stack: list[int] = []
        self.status: str | None = None
        self.exit_code: int | None = None
        self.crash: CrashInfo | None = None
        self._input = bytearray()
        self._cursor = 0
        self._input_closed = False
        self._eof_delivered = False
        self._rng_state = (self.limits.rng_seed or 0x9E3779B97F4A7C15) & M64
        self._heap = HEAP_BASE
        self.domain = domain
        self.compare_log: list[CompareRecord] = []
        self._reg_shadow: list[Any] = [None] * 8
        self._mem_shadow: dict[int, Any] = {}
        self._reg_prov: list[int | None] = [None] * 8

    def feed(self, data: bytes) -> None:
        self._input += data

    def close_input(self) -> None:
        self._input_closed = True

    def result(self) -> ExecutionResult:
        assert self.status in (EXITED, CRASHED, STEP_LIMIT, INPUT_EXHAUSTED)
        return ExecutionResult(
            status=self.status,
            output=bytes(self.output),
            coverage=frozenset(self.coverage),
            compare_log=tuple(self.compare_log),
            steps=self.steps,
            exit_code=self.exit_code,
            crash=self.crash,
        )

    # -- helpers -----------------------------------------------------------

    def _rand_bytes(self, n: int) -> bytes:
        out = bytearray()
        s = self._rng_state
        while len(out) < n:
            s ^= s >> 12
            s = (s ^ (s << 25)) & M64
            s ^= s >> 27
            out += ((s * 2685821657736338717) & M64).to_bytes(8, "little")
        self._rng_state = s
        return bytes(out[:n])

    def _do_crash(self, kind: str, pc: int) -> str:
        self.crash = CrashInfo(kind=kind, pc=pc, block=self._block_of[pc // INSN_SIZE] if pc < len(self._code) * INSN_SIZE else self.cur_block)
        self.status = CRASHED
        return CRASHED

    # -- the step loop -----------------------------------------------------

    def run(self) -> str:
        """Run until a terminal status or (when input is still open) until
        blocked on receive.  Returns the status string."""
        if self.status is not None:
            return self.status
        code = self._code
        code_len = len(code) * INSN_SIZE
        mem = self.mem
        regs = self.regs
        cov = self.coverage
        is_leader = self._is_leader
        block_of = self._block_of
        dirty = self._dirty
        out = self.output
        domain = self.domain
        track = domain is not None
        rsh = self._reg_shadow
        msh = self._mem_shadow
        prov = self._reg_prov
        max_steps = self.limits.max_steps
        max_out = self.limits.max_output
        log_cap = self.limits.compare_log_cap
        clog = self.compare_log
        pc = self.pc
        steps = self.steps
        cur_block = self.cur_block
        status: str | None = None

        while True:
            if steps >= max_steps:
                status = STEP_LIMIT
                break
            i = pc >> 3
            op, a, b, c, imm = code[i]
            steps += 1
            npc = pc + INSN_SIZE

            if op == LOADB or op == LOADW:
                base = regs[b]
                addr = (base + imm) & M32
                size = 1 if op == LOADB else 4
                if addr + size > MEM_SIZE:
                    status = self._do_crash("oob_load", pc)
                    break
                if op == LOADB:
                    regs[a] = mem[addr]
                else:
                    regs[a] = int.from_bytes(mem[addr : addr + 4], "little")
                if track:
                    if rsh[b] is not None:
                        rsh[a] = domain.opaque_load(rsh[b], regs[a])
                        prov[a] = None
                    elif op == LOADB:
                        rsh[a] = msh.get(addr)
                        prov[a] = addr if rsh[a] is None else None
                    else:
                        shs = [msh.get(addr + k) for k in range(4)]
                        rsh[a] = (
                            domain.combine_bytes(shs, mem[addr : addr + 4], regs[a])
                            if any(s is not None for s in shs)
                            else None
                        )
                        prov[a] = addr if rsh[a] is None else None
            elif op == STOREB or op == STOREW:
                addr = (regs[a] + imm) & M32
                size = 1 if op == STOREB else 4
                if addr + size > MEM_SIZE:
                    status = self._do_crash("oob_store", pc)
                    break
                val = regs[b]
                if op == STOREB:
                    mem[addr] = val & 0xFF
                else:
                    mem[addr : addr + 4] = (val & M32).to_bytes(4, "little")
                dirty.append((addr, size))
                if track:
                    sb = rsh[b]
                    if op == STOREB:
                        if sb is not None:
                            msh[addr] = domain.trunc_byte(sb, val & 0xFF)
                        elif addr in msh:
                            del msh[addr]
                    else:
                        if sb is not None:
                            parts = domain.split_bytes(sb, val & M32)
                            for k in range(4):
                                msh[addr + k] = parts[k]
                        else:
                            for k in range(4):
                                msh.pop(addr + k, None)
            elif op == MOVI:
                regs[a] = imm & M32
                if track:
                    rsh[a] = None
                    prov[a] = None
            elif op == MOV:
                regs[a] = regs[b]
                if track:
                    rsh[a] = rsh[b]
                    prov[a] = prov[b]
            elif ADD <= op <= SHR:
                va = regs[b]
                if c == IMM_OPERAND:
                    vb = imm & M32
                    sb = None
                else:
                    vb = regs[c]
                    sb = rsh[c] if track else None
                if op == ADD:
                    res = (va + vb) & M32
                elif op == SUB:
                    res = (va - vb) & M32
                elif op == MUL:
                    res = (va * vb) & M32
                elif op == DIVU:
                    if vb == 0:
                        status = self._do_crash("div_zero", pc)
                        break
                    res = va // vb
                elif op == AND:
                    res = va & vb
                elif op == OR:
                    res = va | vb
                elif op == XOR:
                    res = va ^ vb
                elif op == SHL:
                    res = (va << (vb & 31)) & M32
                else:  # SHR
                    res = va >> (vb & 31)
                regs[a] = res
                if track:
                    sa = rsh[b]
                    rsh[a] = domain.binop(op, sa, va, sb, vb, res) if (sa is not None or sb is not None) else None
                    prov[a] = None
            elif op == JMP:
                npc = imm & M32
            elif JEQ <= op <= JGEU:
                va = regs[a]
                vb = regs[b]
                if op == JEQ:
                    taken = va == vb
                elif op == JNE:
                    taken = va != vb
                elif op == JLTU:
                    taken = va < vb
                else:
                    taken = va >= vb
                if track:
                    sa = rsh[a]
                    sb = rsh[b]
                    if sa is not None or sb is not None:
                        if len(clog) < log_cap:
                            clog.append(
                                CompareRecord(
                                    pc=pc,
                                    kind=BRANCH_KIND[op],
                                    lhs_value=va,
                                    rhs_value=vb,
                                    lhs_input_deps=domain.deps(sa),
                                    rhs_input_deps=domain.deps(sb),
                                    lhs_data_addr=prov[a] if sa is None else None,
                                    rhs_data_addr=prov[b] if sb is None else None,
                                )
                            )
                        domain.on_branch(pc, BRANCH_KIND[op], sa, va, sb, vb, taken)
                if taken:
                    npc = imm & M32
            elif op == CALL:
                if len(self.call_stack) >= CALL_STACK_MAX:
                    status = self._do_crash("call_overflow", pc)
                    break
                self.call_stack.append(npc)
                npc = imm & M32
            elif op == RET:
                if not self.call_stack:
                    status = self._do_crash("invalid_jump", pc)
                    break
                npc = self.call_stack.pop()
            elif op == HALT:
                self.exit_code = imm & M32
                status = EXITED
                break
            elif op == SYS:
                n = imm
                if n == SYS_TRANSMIT:
                    ptr = regs[0]
                    ln = regs[1]
                    if ln and ptr + ln > MEM_SIZE:
                        status = self._do_crash("oob_load", pc)
                        break
                    room = max_out - len(out)
                    sent = ln if ln <= room else room
                    if sent:
                        out += mem[ptr : ptr + sent]
                    regs[0] = sent
                    if track:
                        rsh[0] = None
                        prov[0] = None
                elif n == SYS_RECEIVE:
                    ptr = regs[0]
                    ln = regs[1]
                    if ln and ptr + ln > MEM_SIZE:
                        status = self._do_crash("oob_store", pc)
                        break
                    if ln == 0:
                        regs[0] = 0
                    else:
                        avail = len(self._input) - self._cursor
                        if avail < ln and not self._input_closed:
                            # block: roll the step back and wait for feed()
                            steps -= 1
                            self.pc = pc
                            self.steps = steps
                            self.cur_block = cur_block
                            return NEED_INPUT
                        take = ln if avail >= ln else avail
                        if take:
                            cur = self._cursor
                            mem[ptr : ptr + take] = self._input[cur : cur + take]
                            dirty.append((ptr, take))
                            if track:
                                for k in range(take):
                                    msh[ptr + k] = domain.from_input(cur + k, self._input[cur + k])
                            self._cursor = cur + take
                            regs[0] = take
                        else:
                            if self._eof_delivered:
                                self.status = INPUT_EXHAUSTED
                                status = INPUT_EXHAUSTED
                                break
                            self._eof_delivered = True
                            regs[0] = 0
                    if track:
                        rsh[0] = None
                        prov[0] = None
                elif n == SYS_RANDOM:
                    ptr = regs[0]
                    ln = regs[1]
                    if ln and ptr + ln > MEM_SIZE:
                        status = self._do_crash("oob_store", pc)
                        break
                    if ln:
                        mem[ptr : ptr + ln] = self._rand_bytes(ln)
                        dirty.append((ptr, ln))
                        if track:
                            for k in range(ln):
                                msh.pop(ptr + k, None)
                    regs[0] = ln
                    if track:
                        rsh[0] = None
                        prov[0] = None
                elif n == SYS_ALLOCATE:
                    ln = (regs[0] + 15) & ~15
                    if ln == 0 or self._heap + ln > MEM_SIZE:
                        regs[0] = 0
                    else:
                        regs[0] = self._heap
                        self._heap += ln
                    if track:
                        rsh[0] = None
                        prov[0] = None
                elif n == SYS_DEALLOCATE or n == SYS_FDWAIT:
                    regs[0] = 0
                    if track:
                        rsh[0] = None
                        prov[0] = None
                else:  # SYS_TERMINATE
                    self.exit_code = regs[0]
                    status = EXITED
                    break
            else:
                status = self._do_crash("invalid_opcode", pc)
                break

            if npc >= code_len:
                status = self._do_crash("invalid_jump", pc)
                break
            ni = npc >> 3
            if is_leader[ni]:
                cov.add((cur_block, npc))
                cur_block = npc
            pc = npc

        self.pc = pc
        self.steps = steps
        self.cur_block = cur_block
        self.status = status
        return status  # type: ignore[return-value]

    # -- one-shot batch API -------------------------------------------------

    def execute(self, data: bytes, limits: VmLimits | None = None,
                domain: ShadowDomain | None = TAINT) -> ExecutionResult:
        self.reset(limits=limits, domain=domain)
        self.feed(data)
        self.close_input()
        self.run()
        return self.result()

    def run_fast(self, data: bytes) -> str:
        """Batch run without tracking; read status/coverage/output/crash off
        the instance before the next reset."""
        self.reset(domain=None)
        self.feed(data)
        self.close_input()
        return self.run()


class Session:
    """Interactive execution: feed input in chunks, observe incremental
    output and coverage.  Concatenating all fed chunks and replaying via
    execute() yields the same cumulative output and coverage."""

    def __init__(self, program: ProgramImage, limits: VmLimits | None = None,
                 domain: ShadowDomain | None = TAINT) -> None:
        self._m = Machine(program, limits)
        self._m.reset(domain=domain)
        self.closed = False
        self.fed = bytearray()

    @property
    def machine(self) -> Machine:
        return self._m

    @property
    def status(self) -> str | None:
        return self._m.status

    @property
    def coverage(self) -> set[tuple[int, int]]:
        return self._m.coverage

    def feed(self, data: bytes) -> tuple[bytes, set[tuple[int, int]]]:
        if self.closed or self._m.status not in (None, NEED_INPUT):
            raise SessionClosedError("session is closed")
        out_mark = len(self._m.output)
        cov_before = set(self._m.coverage)
        self.fed += data
        self._m.feed(data)
        st = self._m.run()
        if st != NEED_INPUT:
            self.closed = True
        new_out = bytes(self._m.output[out_mark:])
        new_edges = self._m.coverage - cov_before
        return new_out, new_edges

    def close(self) -> ExecutionResult:
        if self.closed and self._m.status == NEED_INPUT:  # pragma: no cover
            raise SessionClosedError("session is closed")
        if self._m.status in (None, NEED_INPUT):
            self._m.close_input()
            self._m.run()
        self.closed = True
        return self._m.result()


def execute(program: ProgramImage, data: bytes, limits: VmLimits | None = None) -> ExecutionResult:
    """Deterministic batch execution with taint tracking and compare log."""
    return Machine(program, limits).execute(data, domain=TAINT)


def execute_interactive(program: ProgramImage, limits: VmLimits | None = None) -> Session:
    return Session(program, limits)
