"""A tiny deterministic machine: 32 64-bit registers, flat word memory,
one instruction per simulated cycle.

The instruction set is just big enough to exercise the checking protocol:
register ALU ops, loads/stores, forward conditional branches, an atomic
read-modify-write (which logs as two entries), and a privilege-switch
marker standing in for kernel entries (no architectural effect; kernel
code is not simulated).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from ..rng import Xorshift64Star

_M64 = (1 << 64) - 1
NUM_REGS = 32


class MachineFault(RuntimeError):
    """Out-of-range memory access in raw addressing mode."""


class Kind(enum.Enum):
    ALU = "Alu"
    LOAD = "Load"
    STORE = "Store"
    BRANCH = "Branch"
    PRIV_SWITCH = "PrivSwitch"
    AMO = "Amo"


class AluOp(enum.Enum):
    ADD = 0
    SUB = 1
    XOR = 2
    AND = 3
    OR = 4
    MUL = 5


@dataclass(frozen=True)
class Instruction:
    kind: Kind
    op: AluOp | None = None
    rd: int = 0
    rs1: int = 0
    rs2: int = 0
    imm: int = 0
    target: int = 0  # branch target (absolute program index)


@dataclass(frozen=True)
class MemOp:
    """One committed memory effect (write=False reads, write=True stores)."""

    addr: int
    value: int
    write: bool


@dataclass
class Commit:
    """What one executed instruction did."""

    instr: Instruction
    pc: int
    next_pc: int
    mem_ops: tuple[MemOp, ...] = ()

    @property
    def is_priv(self) -> bool:
        return self.instr.kind is Kind.PRIV_SWITCH


@dataclass(frozen=True)
class Program:
    """Code plus the deterministic initial machine state."""

    instructions: tuple[Instruction, ...]
    init_regs: tuple[int, ...]
    init_mem: tuple[int, ...]
    wrap_addresses: bool = True

    def __len__(self) -> int:
        return len(self.instructions)

    @property
    def mem_size(self) -> int:
        return len(self.init_mem)


def _alu(op: AluOp, a: int, b: int) -> int:
    if op is AluOp.ADD:
        return (a + b) & _M64
    if op is AluOp.SUB:
        return (a - b) & _M64
    if op is AluOp.XOR:
        return a ^ b
    if op is AluOp.AND:
        return a & b
    if op is AluOp.OR:
        return a | b
    return (a * b) & _M64


class TinyMachine:
    """Executes a Program one instruction per step(); fully deterministic."""

    def __init__(self, program: Program):
        self.program = program
        self.regs = list(program.init_regs)
        self.mem = list(program.init_mem)
        self.pc = 0
        self._mask = program.mem_size - 1
        if program.wrap_addresses and program.mem_size & self._mask:
            raise ValueError("wrap addressing needs a power-of-two memory size")

    @property
    def halted(self) -> bool:
        return not (0 <= self.pc < len(self.program.instructions))

    def _addr(self, base: int, imm: int) -> int:
        a = (base + imm) & _M64
        if self.program.wrap_addresses:
            return a & self._mask
        if a >= self.program.mem_size:
            raise MachineFault(f"address {a} out of range")
        return a

    def step(self) -> Commit:
        """Execute the instruction at pc and return its commit record."""
        if self.halted:
            raise RuntimeError("machine halted")
        pc = self.pc
        ins = self.program.instructions[pc]
        regs = self.regs
        mem_ops: tuple[MemOp, ...] = ()
        next_pc = pc + 1

        k = ins.kind
        if k is Kind.ALU:
            regs[ins.rd] = _alu(ins.op, regs[ins.rs1], regs[ins.rs2])
        elif k is Kind.LOAD:
            a = self._addr(regs[ins.rs1], ins.imm)
            v = self.mem[a]
            regs[ins.rd] = v
            mem_ops = (MemOp(a, v, False),)
        elif k is Kind.STORE:
            a = self._addr(regs[ins.rs1], ins.imm)
            v = regs[ins.rs2]
            self.mem[a] = v
            mem_ops = (MemOp(a, v, True),)
        elif k is Kind.BRANCH:
            if regs[ins.rs1] < regs[ins.rs2]:
                next_pc = ins.target
        elif k is Kind.AMO:
            a = self._addr(regs[ins.rs1], ins.imm)
            old = self.mem[a]
            new = (old + regs[ins.rs2]) & _M64
            self.mem[a] = new
            regs[ins.rd] = old
            mem_ops = (MemOp(a, old, False), MemOp(a, new, True))
        # PRIV_SWITCH: no architectural effect, segment boundary only

        self.pc = next_pc
        return Commit(instr=ins, pc=pc, next_pc=next_pc, mem_ops=mem_ops)


def random_program(
    rng: Xorshift64Star,
    length: int,
    mem_size: int = 1024,
    frac_load: float = 0.15,
    frac_store: float = 0.12,
    frac_branch: float = 0.08,
    frac_amo: float = 0.03,
    frac_priv: float = 0.0,
) -> Program:
    """Random terminating program (branches only jump forward).

    Registers and memory start with seeded 64-bit noise so data paths carry
    entropy from the first instruction.
    """
    if length < 0:
        raise ValueError("length must be >= 0")
    if mem_size & (mem_size - 1):
        raise ValueError("mem_size must be a power of two")
    # thresholds over a single uniform draw
    t_load = frac_load
    t_store = t_load + frac_store
    t_branch = t_store + frac_branch
    t_amo = t_branch + frac_amo
    t_priv = t_amo + frac_priv
    if t_priv > 1.0 + 1e-12:
        raise ValueError("instruction fractions must sum to at most 1")

    alu_ops = list(AluOp)
    instrs: list[Instruction] = []
    for i in range(length):
        u = rng.random()
        r = rng.randrange
        if u < t_load:
            instrs.append(Instruction(Kind.LOAD, rd=r(NUM_REGS), rs1=r(NUM_REGS), imm=r(mem_size)))
        elif u < t_store:
            instrs.append(Instruction(Kind.STORE, rs1=r(NUM_REGS), rs2=r(NUM_REGS), imm=r(mem_size)))
        elif u < t_branch and i + 2 < length:
            span = min(16, length - i - 1)
            instrs.append(
                Instruction(Kind.BRANCH, rs1=r(NUM_REGS), rs2=r(NUM_REGS), target=i + 1 + r(span))
            )
        elif u < t_amo:
            instrs.append(
                Instruction(Kind.AMO, rd=r(NUM_REGS), rs1=r(NUM_REGS), rs2=r(NUM_REGS), imm=r(mem_size))
            )
        elif u < t_priv:
            instrs.append(Instruction(Kind.PRIV_SWITCH))
        else:
            instrs.append(
                Instruction(
                    Kind.ALU, op=alu_ops[r(len(alu_ops))], rd=r(NUM_REGS), rs1=r(NUM_REGS), rs2=r(NUM_REGS)
                )
            )
    init_regs = tuple(rng.next_u64() for _ in range(NUM_REGS))
    init_mem = tuple(rng.next_u64() for _ in range(mem_size))
    return Program(instructions=tuple(instrs), init_regs=init_regs, init_mem=init_mem)
