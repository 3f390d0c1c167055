"""Tiny register IR used as the pre-obfuscation source and as the semantic oracle.

Sixteen registers ``r0..r15``, a 256-cell data memory, signed 64-bit wrapping
arithmetic. ``LOAD rd ra @base`` reads ``mem[base + ra]``; ``STORE ra @base rs``
writes ``mem[base + ra] = rs``. ``JZ rc t`` jumps when ``rc == 0``. Comparisons
write 1 or 0.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from typing import Sequence

from .errors import ParseError, Timeout, TrapBounds, TrapDivZero, ValidationError

N_REGS = 16
MEM_SIZE = 256
DEFAULT_BUDGET = 1_000_000

# operand kinds: reg, imm (int64), mem (static base < 256), target (instr index)
SCHEMA: dict[str, tuple[str, ...]] = {
    "CONST": ("reg", "imm"),
    "MOV": ("reg", "reg"),
    "ADD": ("reg", "reg", "reg"),
    "SUB": ("reg", "reg", "reg"),
    "MUL": ("reg", "reg", "reg"),
    "DIV": ("reg", "reg", "reg"),
    "MOD": ("reg", "reg", "reg"),
    "LT": ("reg", "reg", "reg"),
    "EQ": ("reg", "reg", "reg"),
    "LOAD": ("reg", "reg", "mem"),
    "STORE": ("reg", "mem", "reg"),
    "JMP": ("target",),
    "JZ": ("reg", "target"),
    "OUT": ("reg",),
    "RET": (),
}
OPCODES: tuple[str, ...] = tuple(SCHEMA)
ALU_OPS = ("ADD", "SUB", "MUL", "DIV", "MOD", "LT", "EQ")

_I64_MIN = -(1 << 63)
_I64_MAX = (1 << 63) - 1
_MASK = (1 << 64) - 1


def wrap64(x: int) -> int:
    x &= _MASK
    return x - (1 << 64) if x >> 63 else x


def div64(a: int, b: int) -> int:
    if b == 0:
        raise TrapDivZero("division by zero")
    q = abs(a) // abs(b)
    return wrap64(-q if (a < 0) != (b < 0) else q)


def mod64(a: int, b: int) -> int:
    if b == 0:
        raise TrapDivZero("modulo by zero")
    return wrap64(a - b * div64(a, b))


@dataclass(frozen=True)
class Instr:
    opcode: str
    operands: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "operands", tuple(int(x) for x in self.operands))

    def __str__(self) -> str:
        parts = [self.opcode]
        for kind, value in zip(SCHEMA[self.opcode], self.operands):
            if kind == "reg":
                parts.append(f"r{value}")
            elif kind == "mem":
                parts.append(f"@{value}")
            else:
                parts.append(str(value))
        return " ".join(parts)


@dataclass(frozen=True)
class SourceProgram:
    name: str
    instrs: tuple[Instr, ...]
    inputs: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "instrs", tuple(self.instrs))

    def opcodes_used(self) -> set[str]:
        return {ins.opcode for ins in self.instrs}


def validate(program: SourceProgram) -> None:
    """Check the static instruction invariants; raise ValidationError on the first violation."""
    n = len(program.instrs)
    if not any(ins.opcode == "RET" for ins in program.instrs):
        raise ValidationError(f"{program.name}: no RET")
    if not 0 <= program.inputs <= N_REGS:
        raise ValidationError(f"{program.name}: bad input count {program.inputs}")
    for pc, ins in enumerate(program.instrs):
        if ins.opcode not in SCHEMA:
            raise ValidationError(f"{program.name}[{pc}]: unknown opcode {ins.opcode}")
        kinds = SCHEMA[ins.opcode]
        if len(kinds) != len(ins.operands):
            raise ValidationError(f"{program.name}[{pc}]: {ins.opcode} takes {len(kinds)} operands")
        for kind, value in zip(kinds, ins.operands):
            ok = {
                "reg": 0 <= value < N_REGS,
                "mem": 0 <= value < MEM_SIZE,
                "target": 0 <= value < n,
                "imm": _I64_MIN <= value <= _I64_MAX,
            }[kind]
            if not ok:
                raise ValidationError(f"{program.name}[{pc}]: bad {kind} operand {value}")


def eval_program(program: SourceProgram, inputs: Sequence[int], step_budget: int = DEFAULT_BUDGET) -> list[int]:
    """Run ``program`` directly and return the OUT values in order."""
    if len(inputs) != program.inputs:
        raise ValueError(f"{program.name} takes {program.inputs} inputs, got {len(inputs)}")
    regs = [0] * N_REGS
    for i, v in enumerate(inputs):
        regs[i] = wrap64(v)
    mem = [0] * MEM_SIZE
    out: list[int] = []
    code = program.instrs
    pc = 0
    steps = 0
    while True:
        if steps >= step_budget:
            raise Timeout(f"{program.name}: step budget {step_budget} exhausted")
        steps += 1
        if not 0 <= pc < len(code):
            raise TrapBounds(f"{program.name}: pc {pc} out of program")
        ins = code[pc]
        op, a = ins.opcode, ins.operands
        pc += 1
        if op == "CONST":
            regs[a[0]] = wrap64(a[1])
        elif op == "MOV":
            regs[a[0]] = regs[a[1]]
        elif op == "ADD":
            regs[a[0]] = wrap64(regs[a[1]] + regs[a[2]])
        elif op == "SUB":
            regs[a[0]] = wrap64(regs[a[1]] - regs[a[2]])
        elif op == "MUL":
            regs[a[0]] = wrap64(regs[a[1]] * regs[a[2]])
        elif op == "DIV":
            regs[a[0]] = div64(regs[a[1]], regs[a[2]])
        elif op == "MOD":
            regs[a[0]] = mod64(regs[a[1]], regs[a[2]])
        elif op == "LT":
            regs[a[0]] = int(regs[a[1]] < regs[a[2]])
        elif op == "EQ":
            regs[a[0]] = int(regs[a[1]] == regs[a[2]])
        elif op == "LOAD":
            addr = a[2] + regs[a[1]]
            if not 0 <= addr < MEM_SIZE:
                raise TrapBounds(f"{program.name}: load from {addr}")
            regs[a[0]] = mem[addr]
        elif op == "STORE":
            addr = a[1] + regs[a[0]]
            if not 0 <= addr < MEM_SIZE:
                raise TrapBounds(f"{program.name}: store to {addr}")
            mem[addr] = regs[a[2]]
        elif op == "JMP":
            pc = a[0]
        elif op == "JZ":
            if regs[a[0]] == 0:
                pc = a[1]
        elif op == "OUT":
            out.append(regs[a[0]])
        elif op == "RET":
            return out
        else:  # pragma: no cover - validate() rejects this
            raise ValidationError(f"unknown opcode {op}")


# --- text format ------------------------------------------------------------


def format_program(program: SourceProgram) -> str:
    lines = [f"#! name {program.name}", f"#! inputs {program.inputs}"]
    lines.extend(str(ins) for ins in program.instrs)
    return "\n".join(lines) + "\n"


def _operand(kind: str, tok: str, lineno: int) -> int:
    try:
        if kind == "reg":
            if tok[:1].lower() != "r":
                raise ValueError
            return int(tok[1:])
        if kind == "mem":
            return int(tok[1:] if tok.startswith("@") else tok)
        return int(tok)
    except ValueError:
        raise ParseError(f"bad {kind} operand {tok!r}", lineno) from None


def parse_program(text: str, name: str = "program") -> SourceProgram:
    """Parse ``<OPCODE> <operands...>`` lines; ``#! name`` / ``#! inputs`` pragmas set metadata."""
    inputs = 0
    instrs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if stripped.startswith("#!"):
            key, _, value = stripped[2:].strip().partition(" ")
            if key == "name":
                name = value.strip()
            elif key == "inputs":
                inputs = _operand("imm", value.strip(), lineno)
            continue
        stripped = stripped.split("#", 1)[0].strip()
        if not stripped:
            continue
        toks = stripped.replace(",", " ").split()
        op = toks[0].upper()
        if op not in SCHEMA:
            raise ParseError(f"unknown opcode {toks[0]!r}", lineno)
        kinds = SCHEMA[op]
        if len(toks) - 1 != len(kinds):
            raise ParseError(f"{op} takes {len(kinds)} operands", lineno)
        instrs.append(Instr(op, tuple(_operand(k, t, lineno) for k, t in zip(kinds, toks[1:]))))
    program = SourceProgram(name, tuple(instrs), inputs)
    validate(program)
    return program


# --- benchmarks ---------------------------------------------------------------

BUBBLE_PRESET = (5, 1, 4, 2, 8, 3, 7, 6)

_FACTORIAL = """
#! name factorial
#! inputs 1
CONST r1 1      # acc
CONST r2 1
JZ r0 6
MUL r1 r1 r0
SUB r0 r0 r2
JMP 2
OUT r1
RET
"""

_FIBONACCI = """
#! name fibonacci
#! inputs 1
CONST r1 0      # a
CONST r2 1      # b
CONST r3 1
JZ r0 9
ADD r4 r1 r2
MOV r1 r2
MOV r2 r4
SUB r0 r0 r3
JMP 3
OUT r1
RET
"""

# inputs r0..r7 are copied to mem[0..7], sorted in place, then printed
_BUBBLE_SORT = """
#! name bubble_sort
#! inputs 8
STORE r15 @0 r0
STORE r15 @1 r1
STORE r15 @2 r2
STORE r15 @3 r3
STORE r15 @4 r4
STORE r15 @5 r5
STORE r15 @6 r6
STORE r15 @7 r7
CONST r8 0       # 8: i
CONST r9 7       # n - 1
CONST r10 1
LT r11 r8 r9     # 11: outer test
JZ r11 27
CONST r12 0      # j
SUB r13 r9 r8    # inner limit
LT r11 r12 r13   # 15: inner test
JZ r11 25
LOAD r1 r12 @0
LOAD r2 r12 @1
LT r11 r2 r1
JZ r11 23
STORE r12 @0 r2
STORE r12 @1 r1
ADD r12 r12 r10  # 23
JMP 15
ADD r8 r8 r10    # 25
JMP 11
CONST r12 0      # 27: print loop
CONST r13 8
LT r11 r12 r13   # 29
JZ r11 35
LOAD r1 r12 @0
OUT r1
ADD r12 r12 r10
JMP 29
RET              # 35
"""


def builtin_programs() -> list[SourceProgram]:
    return [parse_program(_BUBBLE_SORT), parse_program(_FACTORIAL), parse_program(_FIBONACCI)]


def builtin(name: str) -> SourceProgram:
    for p in builtin_programs():
        if p.name == name:
            return p
    raise KeyError(name)


def default_inputs(program: SourceProgram) -> list[list[int]]:
    """Fixed input suite used by the semantic-preservation checks."""
    if program.name == "bubble_sort":
        return [list(BUBBLE_PRESET), [8, 7, 6, 5, 4, 3, 2, 1], [3, -1, 3, 0, 9, -7, 2, 2]]
    if program.name == "factorial":
        return [[5], [0], [10]]
    if program.name == "fibonacci":
        return [[10], [1], [20]]
    k = program.inputs
    return [[0] * k, [i + 1 for i in range(k)], [(-3) ** (i + 1) + 7 * i for i in range(k)]]


# --- random programs ---------------------------------------------------------

# r0..r11 general purpose, r12..r14 loop counters (one per nesting level),
# r15 stays zero and serves as the address base for memory operations
_GENERAL = 12
_ZERO = 15
_MAX_DEPTH = 3
_MAX_TRIP = 4


class _Gen:
    def __init__(self, rng: random.Random):
        self.rng = rng
        self.items: list[tuple[str, tuple]] = []  # ("ins", (op, operands)) or ("label", name)
        self.labels = 0

    def label(self) -> str:
        self.labels += 1
        return f"L{self.labels}"

    def reg(self) -> int:
        return self.rng.randrange(_GENERAL)

    def emit(self, op: str, *operands) -> None:
        self.items.append(("ins", (op, operands)))

    def mark(self, name: str) -> None:
        self.items.append(("label", name))

    def straight(self, budget: int) -> int:
        """Emit one straight-line construct of at most ``budget`` instructions; return its size."""
        rng = self.rng
        roll = rng.random()
        if budget >= 2 and roll < 0.12:
            k = self.reg()
            self.emit("CONST", k, rng.choice([-7, -3, -2, 2, 3, 5, 9, 13]))
            self.emit(rng.choice(["DIV", "MOD"]), self.reg(), self.reg(), k)
            return 2
        if roll < 0.30:
            self.emit("CONST", self.reg(), rng.randint(-100, 100))
        elif roll < 0.42:
            self.emit("MOV", self.reg(), self.reg())
        elif roll < 0.72:
            self.emit(rng.choice(["ADD", "SUB", "MUL", "LT", "EQ"]), self.reg(), self.reg(), self.reg())
        elif roll < 0.80:
            self.emit("LOAD", self.reg(), _ZERO, rng.randrange(MEM_SIZE))
        elif roll < 0.88:
            self.emit("STORE", _ZERO, rng.randrange(MEM_SIZE), self.reg())
        else:
            self.emit("OUT", self.reg())
        return 1

    def block(self, budget: int, depth: int) -> None:
        """Emit exactly ``budget`` instructions."""
        rng = self.rng
        while budget > 0:
            roll = rng.random()
            if budget >= 6 and depth < _MAX_DEPTH and roll < 0.15:
                inner = rng.randint(1, min(budget - 5, 12))
                counter = _GENERAL + depth
                head, done = self.label(), self.label()
                self.emit("CONST", counter, rng.randint(1, _MAX_TRIP))
                self.mark(head)
                self.emit("JZ", counter, done)
                self.block(inner, depth + 1)
                one = self.reg()
                self.emit("CONST", one, 1)
                self.emit("SUB", counter, counter, one)
                self.emit("JMP", head)
                self.mark(done)
                budget -= inner + 5
            elif budget >= 3 and roll < 0.30:
                inner = rng.randint(1, min(budget - 1, 8))
                skip = self.label()
                self.emit("JZ", self.reg(), skip)
                self.block(inner, depth)
                self.mark(skip)
                budget -= inner + 1
            else:
                budget -= self.straight(budget)

    def assemble(self, name: str, inputs: int) -> SourceProgram:
        where: dict[str, int] = {}
        pc = 0
        for kind, payload in self.items:
            if kind == "label":
                where[payload] = pc
            else:
                pc += 1
        instrs = []
        for kind, payload in self.items:
            if kind != "ins":
                continue
            op, operands = payload
            resolved = tuple(where[x] if isinstance(x, str) else x for x in operands)
            instrs.append(Instr(op, resolved))
        return SourceProgram(name, tuple(instrs), inputs)


def random_program(seed: int, size: int) -> SourceProgram:
    """Deterministic terminating program of exactly ``size`` instructions.

    Only forward jumps and counted loops with dedicated counters are generated,
    and divisors are always fresh non-zero constants, so programs neither hang
    nor trap. The last two instructions are ``OUT`` and ``RET``.
    """
    if not 8 <= size <= 512:
        raise ValueError(f"size must be in [8, 512], got {size}")
    rng = random.Random(f"vmlab-program-{seed}")
    inputs = rng.randint(1, 4)
    gen = _Gen(rng)
    gen.block(size - 2, 0)
    gen.emit("OUT", rng.randrange(_GENERAL))
    gen.emit("RET")
    # a trailing forward label may point one past the body; it resolves to the OUT
    program = gen.assemble(f"rand_{seed}", inputs)
    validate(program)
    return program
