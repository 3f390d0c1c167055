"""Executes the pseudo-assembly carried by a Cfg.

The instruction set is a small two-operand register machine::

    mov d, s        add/sub/mul/div/mod d, s     cmp a, b
    je/jne/jl/jge bb_N                           jmp bb_N | jmp reg | jmp seg[addr]
    load d, seg[addr]                            store seg[addr], s
    call __out      (emits a0)                   call __vmlab_<ROLE> (no-op marker)
    ret

Registers are arbitrary identifiers initialised to zero; ``bb_N`` operands
evaluate to the block id ``N``. Memory is split into named segments, each a
bounds-checked list; ``addr`` is ``reg``, ``imm`` or ``reg+imm``. Every block
must end in a control transfer, and computed jumps must land on a recorded
successor.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Sequence

from .cfg import Cfg
from .errors import MachineError, Timeout, TrapBounds
from .ir import div64, mod64, wrap64

MARKER_PREFIX = "__vmlab_"

_LABEL = re.compile(r"^bb_(\d+)$")
_MEM = re.compile(r"^([A-Za-z_]\w*)\[\s*([^\]]*?)\s*\]$")
_INT = re.compile(r"^-?\d+$")

# decoded opcodes
MOV, ALU, CMP, JCC, JMP, JMPR, JMPM, LOAD, STORE, OUT, NOP, RET = range(12)

_ALU = {
    "add": lambda a, b: wrap64(a + b),
    "sub": lambda a, b: wrap64(a - b),
    "mul": lambda a, b: wrap64(a * b),
    "div": div64,
    "mod": mod64,
}
_JCC = {
    "je": lambda a, b: a == b,
    "jne": lambda a, b: a != b,
    "jl": lambda a, b: a < b,
    "jge": lambda a, b: a >= b,
}


@dataclass(frozen=True)
class Operand:
    reg: str | None = None
    imm: int = 0


@dataclass(frozen=True)
class Address:
    segment: str
    reg: str | None
    offset: int


def split_instr(text: str) -> tuple[str, list[str]]:
    mnemonic, _, rest = text.strip().partition(" ")
    operands = [o.strip() for o in rest.split(",")] if rest.strip() else []
    return mnemonic.lower(), operands


def is_marker(text: str) -> bool:
    parts = text.split()
    return len(parts) == 2 and parts[0] == "call" and parts[1].startswith(MARKER_PREFIX)


def _value(tok: str) -> Operand:
    m = _LABEL.match(tok)
    if m:
        return Operand(imm=int(m.group(1)))
    if _INT.match(tok):
        return Operand(imm=int(tok))
    if not re.match(r"^[A-Za-z_]\w*$", tok):
        raise MachineError(f"bad operand {tok!r}")
    return Operand(reg=tok)


def _address(tok: str) -> Address:
    m = _MEM.match(tok)
    if not m:
        raise MachineError(f"bad memory operand {tok!r}")
    seg, inner = m.group(1), m.group(2).replace(" ", "")
    if _INT.match(inner):
        return Address(seg, None, int(inner))
    mm = re.match(r"^([A-Za-z_]\w*)(?:([+-])(\d+))?$", inner)
    if not mm:
        raise MachineError(f"bad address {tok!r}")
    off = int(mm.group(3) or 0)
    return Address(seg, mm.group(1), -off if mm.group(2) == "-" else off)


def decode(text: str) -> tuple:
    op, args = split_instr(text)
    try:
        if op == "mov":
            return (MOV, args[0], _value(args[1]))
        if op in _ALU:
            return (ALU, args[0], _value(args[1]), _ALU[op])
        if op == "cmp":
            return (CMP, _value(args[0]), _value(args[1]))
        if op in _JCC:
            m = _LABEL.match(args[0])
            if not m:
                raise MachineError(f"conditional jump needs a block label: {text!r}")
            return (JCC, _JCC[op], int(m.group(1)))
        if op == "jmp":
            tok = args[0]
            m = _LABEL.match(tok)
            if m:
                return (JMP, int(m.group(1)))
            if "[" in tok:
                return (JMPM, _address(tok))
            return (JMPR, _value(tok).reg)
        if op == "load":
            return (LOAD, args[0], _address(args[1]))
        if op == "store":
            return (STORE, _address(args[0]), _value(args[1]))
        if op == "call":
            if args[0] == "__out":
                return (OUT,)
            if args[0].startswith(MARKER_PREFIX):
                return (NOP,)
            raise MachineError(f"unknown call target {args[0]!r}")
        if op == "ret":
            return (RET,)
    except IndexError:
        raise MachineError(f"missing operand in {text!r}") from None
    raise MachineError(f"unknown mnemonic in {text!r}")


def compile_blocks(cfg: Cfg) -> dict[int, tuple[tuple, ...]]:
    return {b.id: tuple(decode(ins) for ins in b.instrs) for b in cfg.blocks}


def run_cfg(
    cfg: Cfg,
    registers: Mapping[str, int],
    segments: Mapping[str, Sequence[int]],
    step_budget: int,
    decoded: dict[int, tuple[tuple, ...]] | None = None,
) -> list[int]:
    """Execute ``cfg`` from its entry until ``ret``; return the values passed to ``__out``."""
    if decoded is None:
        decoded = compile_blocks(cfg)
    succs = {b.id: frozenset(b.succs) for b in cfg.blocks}
    regs: dict[str, int] = dict(registers)
    mem = {name: list(cells) for name, cells in segments.items()}
    out: list[int] = []
    flags = (0, 0)
    steps = 0

    def val(o: Operand) -> int:
        return regs.get(o.reg, 0) if o.reg is not None else o.imm

    def locate(a: Address) -> tuple[list[int], int]:
        seg = mem.get(a.segment)
        if seg is None:
            raise MachineError(f"no memory segment {a.segment!r}")
        idx = a.offset + (regs.get(a.reg, 0) if a.reg is not None else 0)
        if not 0 <= idx < len(seg):
            raise TrapBounds(f"{a.segment}[{idx}] out of bounds")
        return seg, idx

    block = cfg.entry
    while True:
        code = decoded[block]
        nxt = None
        for ins in code:
            if steps >= step_budget:
                raise Timeout(f"step budget {step_budget} exhausted")
            steps += 1
            op = ins[0]
            if op == LOAD:
                seg, idx = locate(ins[2])
                regs[ins[1]] = seg[idx]
            elif op == MOV:
                regs[ins[1]] = val(ins[2])
            elif op == ALU:
                regs[ins[1]] = ins[3](regs.get(ins[1], 0), val(ins[2]))
            elif op == STORE:
                seg, idx = locate(ins[1])
                seg[idx] = val(ins[2])
            elif op == CMP:
                flags = (val(ins[1]), val(ins[2]))
            elif op == JCC:
                if ins[1](*flags):
                    nxt = ins[2]
                    break
            elif op == JMP:
                nxt = ins[1]
                break
            elif op == JMPR:
                nxt = regs.get(ins[1], 0)
                break
            elif op == JMPM:
                seg, idx = locate(ins[1])
                nxt = seg[idx]
                break
            elif op == OUT:
                out.append(regs.get("a0", 0))
            elif op == NOP:
                pass
            elif op == RET:
                return out
        if nxt is None:
            raise MachineError(f"block {block} falls through without a control transfer")
        if nxt not in succs[block]:
            raise MachineError(f"jump from block {block} to unrecorded successor {nxt}")
        block = nxt
