"""Virtualizing obfuscator for the toy IR.

A source program is compiled to bytecode (one virtual instruction per source
instruction plus a trailing ``VEXIT`` sentinel, four code words each) and an
interpreter CFG is emitted around it::

    prologue (NON-VM) -> VM-START -> dispatcher (DISPATCH-START) <-> handlers
                                      -> VM-END -> epilogue (NON-VM)

SWITCH places a loop-switch dispatcher before the handlers; it range-checks
the opcode (default edge to VM-END) and jumps through ``jtab``. DIRECT and
INDIRECT are threaded: handlers jump to a shared fetch/decode hub laid out
after them. DIRECT stores handler addresses inline in the code words; INDIRECT
stores opcode numbers and looks them up in ``htab``. Compare and branch
handlers own interior blocks (role VM).

Every block carries ground-truth role spans. ``optimize`` chain-merges
single-successor blocks into single-predecessor successors, which folds the
native prologue into VM-START and VM-END into the epilogue.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

from .cfg import BasicBlock, Cfg, emit_cfg
from .errors import ValidationError
from .ir import DEFAULT_BUDGET, MEM_SIZE, N_REGS, OPCODES, SourceProgram, validate
from .machine import MARKER_PREFIX, compile_blocks, is_marker, run_cfg
from .roles import DispatchKind, Role

WORDS = 4  # code words per virtual instruction


class Span(NamedTuple):
    start: int
    end: int
    role: Role


@dataclass(frozen=True)
class VInstr:
    op: int
    args: tuple[int, int, int]


@dataclass(frozen=True)
class BytecodeProgram:
    vops: tuple[VInstr, ...]
    vpc0: int
    handler_count: int
    opnames: tuple[str, ...]  # opcode number -> virtual opcode class

    def opnumber(self, name: str) -> int:
        return self.opnames.index(name)


@dataclass(frozen=True)
class VmArtifact:
    cfg: Cfg
    kind: DispatchKind
    opt_level: int
    truth: dict[int, tuple[Span, ...]]
    bytecode: BytecodeProgram
    seed: int
    program: SourceProgram
    handlers: tuple[int, ...]  # opcode number -> block reached for it
    dispatcher: int

    def is_pure(self, block_id: int) -> bool:
        return len({s.role for s in self.truth[block_id]}) == 1

    def block_role(self, block_id: int) -> Role | None:
        """The block's role if pure, else None."""
        spans = self.truth[block_id]
        return spans[0].role if self.is_pure(block_id) else None

    def meta(self) -> dict[str, object]:
        return {
            "program": self.program.name,
            "kind": self.kind.value,
            "opt": self.opt_level,
            "seed": self.seed,
        }


# --- bytecode -------------------------------------------------------------------


def _fields(op: str, operands: Sequence[int], exit_index: int) -> tuple[int, int, int]:
    if op == "JMP":
        return (WORDS * operands[0], 0, 0)
    if op == "JZ":
        return (operands[0], WORDS * operands[1], 0)
    if op == "RET":
        return (WORDS * exit_index, 0, 0)
    padded = tuple(operands) + (0, 0, 0)
    return padded[:3]  # type: ignore[return-value]


def compile_bytecode(program: SourceProgram) -> BytecodeProgram:
    """One virtual opcode class per distinct source opcode (canonical order) plus VEXIT."""
    validate(program)
    used = program.opcodes_used()
    names = tuple(op for op in OPCODES if op in used) + ("VEXIT",)
    number = {name: i for i, name in enumerate(names)}
    exit_index = len(program.instrs)
    vops = [VInstr(number[ins.opcode], _fields(ins.opcode, ins.operands, exit_index)) for ins in program.instrs]
    vops.append(VInstr(number["VEXIT"], (0, 0, 0)))
    return BytecodeProgram(tuple(vops), 0, len(names), names)


def permute_opcodes(bc: BytecodeProgram, rng: random.Random) -> BytecodeProgram:
    perm = list(range(bc.handler_count))
    rng.shuffle(perm)
    names = [""] * bc.handler_count
    for old, new in enumerate(perm):
        names[new] = bc.opnames[old]
    vops = tuple(VInstr(perm[v.op], v.args) for v in bc.vops)
    return BytecodeProgram(vops, bc.vpc0, bc.handler_count, tuple(names))


# --- dispatch styles ---------------------------------------------------------------


@dataclass(frozen=True)
class _Style:
    kind: DispatchKind
    pc: str
    temps: tuple[str, ...]
    frame: int

    def field(self, i: int) -> str:
        if self.kind is DispatchKind.SWITCH:
            return f"code[{self.pc}+{i}]"
        if self.kind is DispatchKind.DIRECT:
            return "code[vip]" if i == 1 else f"code[vip+{i - 1}]"
        return f"code[vap+{i}]"

    def tail(self) -> list[str]:
        if self.kind is DispatchKind.SWITCH:
            return [f"add vpc, {WORDS}", "jmp {D}"]
        if self.kind is DispatchKind.DIRECT:
            return [f"add vip, {WORDS - 1}", "jmp {D}"]
        return ["jmp {D}"]

    def fallthrough(self) -> list[str]:
        if self.kind is DispatchKind.INDIRECT:
            return ["mov vap, vpc", "jmp {D}"]
        return self.tail()

    def goto(self, reg: str) -> list[str]:
        return [f"mov {self.pc}, {reg}", "jmp {D}"]


_STYLES = {
    DispatchKind.SWITCH: _Style(DispatchKind.SWITCH, "vpc", tuple(f"t{i}" for i in range(6)), 160),
    DispatchKind.DIRECT: _Style(DispatchKind.DIRECT, "vip", tuple(f"u{i}" for i in range(6)), 176),
    DispatchKind.INDIRECT: _Style(DispatchKind.INDIRECT, "vpc", tuple(f"w{i}" for i in range(6)), 208),
}

_ALU_MNEMONIC = {"ADD": "add", "SUB": "sub", "MUL": "mul", "DIV": "div", "MOD": "mod"}

# (local name, role, instrs, local successor names); "D" is the dispatcher/hub,
# "vmend" the VM-END block, any other name is prefixed with the handler's tag
_Blk = tuple[str, Role, list[str], list[str]]


def _handler(name: str, st: _Style) -> list[_Blk]:
    t0, t1, t2, t3 = st.temps[:4]
    f = st.field
    H = Role.HANDLER
    if name == "CONST":
        body = [f"load {t1}, {f(2)}", f"load {t0}, {f(1)}", f"store vregs[{t0}], {t1}"]
        return [("head", H, body + st.tail(), ["D"])]
    if name == "MOV":
        body = [f"load {t0}, {f(2)}", f"load {t1}, vregs[{t0}]", f"load {t0}, {f(1)}", f"store vregs[{t0}], {t1}"]
        return [("head", H, body + st.tail(), ["D"])]
    if name in _ALU_MNEMONIC:
        body = [
            f"load {t0}, {f(2)}",
            f"load {t1}, vregs[{t0}]",
            f"load {t0}, {f(3)}",
            f"load {t2}, vregs[{t0}]",
            f"{_ALU_MNEMONIC[name]} {t1}, {t2}",
            f"load {t0}, {f(1)}",
            f"store vregs[{t0}], {t1}",
        ]
        return [("head", H, body + st.tail(), ["D"])]
    if name in ("LT", "EQ"):
        jcc = "jl" if name == "LT" else "je"
        head = [
            f"load {t0}, {f(2)}",
            f"load {t1}, vregs[{t0}]",
            f"load {t0}, {f(3)}",
            f"load {t2}, vregs[{t0}]",
            f"cmp {t1}, {t2}",
            f"{jcc} {{set1}}",
            "jmp {set0}",
        ]
        join = [f"load {t0}, {f(1)}", f"store vregs[{t0}], {t3}"] + st.tail()
        return [
            ("head", H, head, ["set1", "set0"]),
            ("set1", Role.VM, [f"mov {t3}, 1", "jmp {join}"], ["join"]),
            ("set0", Role.VM, [f"mov {t3}, 0", "jmp {join}"], ["join"]),
            ("join", Role.VM, join, ["D"]),
        ]
    if name == "LOAD":
        body = [
            f"load {t0}, {f(2)}",
            f"load {t1}, vregs[{t0}]",
            f"load {t2}, {f(3)}",
            f"add {t1}, {t2}",
            f"load {t1}, data[{t1}]",
            f"load {t0}, {f(1)}",
            f"store vregs[{t0}], {t1}",
        ]
        return [("head", H, body + st.tail(), ["D"])]
    if name == "STORE":
        body = [
            f"load {t0}, {f(1)}",
            f"load {t1}, vregs[{t0}]",
            f"load {t2}, {f(2)}",
            f"add {t1}, {t2}",
            f"load {t0}, {f(3)}",
            f"load {t2}, vregs[{t0}]",
            f"store data[{t1}], {t2}",
        ]
        return [("head", H, body + st.tail(), ["D"])]
    if name in ("JMP", "RET"):
        return [("head", H, [f"load {t0}, {f(1)}"] + st.goto(t0), ["D"])]
    if name == "JZ":
        head = [f"load {t0}, {f(1)}", f"load {t1}, vregs[{t0}]", f"cmp {t1}, 0", "je {taken}", "jmp {fall}"]
        return [
            ("head", H, head, ["taken", "fall"]),
            ("taken", Role.VM, [f"load {t0}, {f(2)}"] + st.goto(t0), ["D"]),
            ("fall", Role.VM, st.fallthrough(), ["D"]),
        ]
    if name == "OUT":
        body = [f"load {t0}, {f(1)}", f"load a0, vregs[{t0}]", "call __out"]
        return [("head", H, body + st.tail(), ["D"])]
    if name == "VEXIT":
        return [("head", H, [f"mov {st.pc}, -1", "jmp {vmend}"], ["vmend"])]
    raise ValueError(f"no handler template for {name}")


class _Layout:
    """Collects named blocks in layout order and resolves ``{name}`` references to ids."""

    def __init__(self) -> None:
        self.blocks: list[tuple[str, Role, list[str], list[str]]] = []

    def add(self, name: str, role: Role, instrs: list[str], succs: list[str]) -> None:
        self.blocks.append((name, role, instrs, succs))

    def finish(self, fname: str) -> tuple[Cfg, dict[int, tuple[Span, ...]], dict[str, int]]:
        ids = {name: i for i, (name, *_rest) in enumerate(self.blocks)}
        labels = {name: f"bb_{i}" for name, i in ids.items()}
        bbs, truth = [], {}
        for name, role, instrs, succs in self.blocks:
            bid = ids[name]
            text = tuple(ins.format_map(labels) for ins in instrs)
            bbs.append(BasicBlock(bid, text, tuple(dict.fromkeys(ids[s] for s in succs))))
            truth[bid] = (Span(0, len(text), role),)
        return Cfg(fname, 0, tuple(bbs)), truth, ids


def _rng(program: SourceProgram, kind: DispatchKind, seed: int) -> random.Random:
    return random.Random(f"vmlab-virt-{program.name}-{kind.value}-{seed}")


def virtualize(program: SourceProgram, kind: DispatchKind, opt_level: int = 0, seed: int = 0) -> VmArtifact:
    if opt_level not in (0, 1):
        raise ValueError(f"opt_level must be 0 or 1, got {opt_level}")
    kind = DispatchKind(kind)
    rng = _rng(program, kind, seed)
    bc = permute_opcodes(compile_bytecode(program), rng)
    st = _STYLES[kind]
    threaded = kind is not DispatchKind.SWITCH
    frame = st.frame + 8 * program.inputs
    cookie = rng.randrange(1, 1 << 31)
    pc0 = WORDS * bc.vpc0

    lay = _Layout()
    lay.add("prologue", Role.NON_VM, ["mov fp, sp", f"sub sp, {frame}", f"mov ck, {cookie}", "jmp {vmstart}"], ["vmstart"])
    setup = [f"store vregs[{i}], r{i}" for i in range(program.inputs)]
    setup.append(f"mov {st.pc}, {pc0}")
    if kind is DispatchKind.INDIRECT:
        setup.append("mov vap, vpc")
    lay.add("vmstart", Role.VM_START, setup + ["jmp {D}"], ["D"])

    H = bc.handler_count
    t0 = st.temps[0]
    targets = [("vmend" if threaded and name == "VEXIT" else f"h{op}_head") for op, name in enumerate(bc.opnames)]
    if kind is DispatchKind.SWITCH:
        disp = [f"load {t0}, code[vpc]", f"cmp {t0}, {H}", "jge {vmend}", f"jmp jtab[{t0}]"]
        dispatcher = ("D", Role.DISPATCH_START, disp, ["vmend"] + targets)
    elif kind is DispatchKind.DIRECT:
        hub = [f"load {t0}, code[vip]", "add vip, 1", f"jmp {t0}"]
        dispatcher = ("D", Role.DISPATCH_START, hub, targets)
    else:
        hub = [f"load {t0}, code[vpc]", "mov vap, vpc", f"add vpc, {WORDS}", f"load {t0}, htab[{t0}]", f"jmp {t0}"]
        dispatcher = ("D", Role.DISPATCH_START, hub, targets)

    groups = []
    for op, name in enumerate(bc.opnames):
        if threaded and name == "VEXIT":
            continue
        tag = f"h{op}_"
        group = []
        for local, role, instrs, succs in _handler(name, st):
            fmt = {s: "{" + (s if s in ("D", "vmend") else tag + s) + "}" for s in ("D", "vmend", "set1", "set0", "join", "taken", "fall")}
            group.append(
                (
                    tag + local,
                    role,
                    [ins.format_map(fmt) for ins in instrs],
                    [s if s in ("D", "vmend") else tag + s for s in succs],
                )
            )
        groups.append(group)
    rng.shuffle(groups)

    if not threaded:
        lay.add(*dispatcher)
    for group in groups:
        for blk in group:
            lay.add(*blk)
    if threaded:
        lay.add(*dispatcher)
    lay.add("vmend", Role.VM_END, ["load r0, vregs[0]", f"mov {'vap' if kind is DispatchKind.INDIRECT else st.pc}, -1", "jmp {epilogue}"], ["epilogue"])
    lay.add("epilogue", Role.NON_VM, [f"add sp, {frame}", "mov sp, fp", "ret"], [])

    cfg, truth, ids = lay.finish(program.name)
    art = VmArtifact(
        cfg=cfg,
        kind=kind,
        opt_level=0,
        truth=truth,
        bytecode=bc,
        seed=seed,
        program=program,
        handlers=tuple(ids[t] for t in targets),
        dispatcher=ids["D"],
    )
    return optimize(art) if opt_level == 1 else art


# --- optimizer ------------------------------------------------------------------------

_BB_REF = re.compile(r"\bbb_(\d+)\b")


def _coalesce(spans: list[Span]) -> tuple[Span, ...]:
    out: list[Span] = []
    for s in spans:
        if s.end <= s.start:
            continue
        if out and out[-1].role == s.role and out[-1].end == s.start:
            out[-1] = Span(out[-1].start, s.end, s.role)
        else:
            out.append(s)
    return tuple(out)


def optimize(artifact: VmArtifact) -> VmArtifact:
    """Chain-merge blocks to a fixpoint and renumber densely in layout order.

    A block whose only successor has it as only predecessor absorbs that
    successor; the now-redundant ``jmp`` between them is dropped. Address-taken
    blocks (the dispatcher and every table target) are never absorbed.
    """
    if artifact.opt_level != 0:
        raise ValueError("optimize expects an opt-level-0 artifact")
    cfg = artifact.cfg
    order = [b.id for b in cfg.blocks]
    instrs = {b.id: list(b.instrs) for b in cfg.blocks}
    succs = {b.id: list(b.succs) for b in cfg.blocks}
    spans = {bid: list(artifact.truth[bid]) for bid in order}
    npreds = {bid: 0 for bid in order}
    for b in cfg.blocks:
        for s in b.succs:
            npreds[s] += 1
    protected = {artifact.dispatcher, cfg.entry, *artifact.handlers}
    alive = set(order)

    changed = True
    while changed:
        changed = False
        for a in order:
            if a not in alive or len(succs[a]) != 1:
                continue
            b = succs[a][0]
            if b == a or b in protected or npreds[b] != 1:
                continue
            if not instrs[a] or instrs[a][-1] != f"jmp bb_{b}":
                continue
            cut = len(instrs[a]) - 1
            merged = [Span(s.start, min(s.end, cut), s.role) for s in spans[a]]
            merged += [Span(s.start + cut, s.end + cut, s.role) for s in spans[b]]
            instrs[a] = instrs[a][:cut] + instrs[b]
            spans[a] = list(_coalesce(merged))
            succs[a] = succs[b]
            alive.discard(b)
            changed = True

    keep = [bid for bid in order if bid in alive]
    new_id = {old: i for i, old in enumerate(keep)}

    def relabel(text: str) -> str:
        return _BB_REF.sub(lambda m: f"bb_{new_id[int(m.group(1))]}", text)

    blocks = tuple(
        BasicBlock(new_id[old], tuple(relabel(i) for i in instrs[old]), tuple(new_id[s] for s in succs[old])) for old in keep
    )
    return replace(
        artifact,
        cfg=Cfg(cfg.name, new_id[cfg.entry], blocks),
        opt_level=1,
        truth={new_id[old]: tuple(spans[old]) for old in keep},
        handlers=tuple(new_id[h] for h in artifact.handlers),
        dispatcher=new_id[artifact.dispatcher],
    )


# --- markers --------------------------------------------------------------------------


def marker(role: Role) -> str:
    return f"call {MARKER_PREFIX}{role.value}"


def insert_markers(artifact: VmArtifact) -> Cfg:
    """Prefix every truth span with a ``call __vmlab_<ROLE>`` pseudo-instruction."""
    blocks = []
    for b in artifact.cfg.blocks:
        out: list[str] = []
        for span in artifact.truth[b.id]:
            out.append(marker(span.role))
            out.extend(b.instrs[span.start : span.end])
        blocks.append(replace(b, instrs=tuple(out)))
    return replace(artifact.cfg, blocks=tuple(blocks))


def strip_markers(cfg: Cfg) -> Cfg:
    blocks = tuple(replace(b, instrs=tuple(i for i in b.instrs if not is_marker(i))) for b in cfg.blocks)
    return replace(cfg, blocks=blocks)


def spans_from_markers(cfg: Cfg) -> dict[int, tuple[Span, ...]]:
    """Recover truth spans (indices into the stripped block) from marker calls."""
    truth = {}
    for b in cfg.blocks:
        spans: list[Span] = []
        pos = 0
        for ins in b.instrs:
            if is_marker(ins):
                role = Role(ins.split()[1][len(MARKER_PREFIX) :])
                if spans:
                    spans[-1] = Span(spans[-1].start, pos, spans[-1].role)
                spans.append(Span(pos, pos, role))
            else:
                if not spans:
                    raise ValidationError(f"block {b.id}: instruction before the first marker")
                pos += 1
        if spans:
            spans[-1] = Span(spans[-1].start, pos, spans[-1].role)
        truth[b.id] = tuple(spans)
    return truth


# --- execution ------------------------------------------------------------------------


def memory_image(artifact: VmArtifact) -> dict[str, list[int]]:
    bc = artifact.bytecode
    code: list[int] = []
    for v in bc.vops:
        head = artifact.handlers[v.op] if artifact.kind is DispatchKind.DIRECT else v.op
        code.extend((head, *v.args))
    segs = {"data": [0] * MEM_SIZE, "vregs": [0] * N_REGS, "code": code}
    if artifact.kind is DispatchKind.SWITCH:
        segs["jtab"] = list(artifact.handlers)
    elif artifact.kind is DispatchKind.INDIRECT:
        segs["htab"] = list(artifact.handlers)
    return segs


def _check_inputs(program: SourceProgram, inputs: Sequence[int]) -> dict[str, int]:
    if len(inputs) != program.inputs:
        raise ValueError(f"{program.name} takes {program.inputs} inputs, got {len(inputs)}")
    return {f"r{i}": int(v) for i, v in enumerate(inputs)}


def interpret(
    artifact: VmArtifact,
    inputs: Sequence[int],
    step_budget: int = 64 * DEFAULT_BUDGET,
    cfg: Cfg | None = None,
) -> list[int]:
    """Run the virtualized function on the pseudo-assembly machine.

    ``cfg`` may substitute a marker-carrying copy of ``artifact.cfg``.
    """
    regs = _check_inputs(artifact.program, inputs)
    return run_cfg(cfg or artifact.cfg, regs, memory_image(artifact), step_budget)


class Executable:
    """An artifact with pre-decoded blocks, for running many input vectors."""

    def __init__(self, artifact: VmArtifact):
        self.artifact = artifact
        self.decoded = compile_blocks(artifact.cfg)
        self.image = memory_image(artifact)

    def __call__(self, inputs: Sequence[int], step_budget: int = 64 * DEFAULT_BUDGET) -> list[int]:
        regs = _check_inputs(self.artifact.program, inputs)
        return run_cfg(self.artifact.cfg, regs, self.image, step_budget, self.decoded)


# --- native lowering ------------------------------------------------------------------


def compile_native(program: SourceProgram) -> Cfg:
    """Lower ``program`` to pseudo-assembly without virtualization (the "before" CFG)."""
    validate(program)
    code = program.instrs
    n = len(code)
    leaders = {0}
    for pc, ins in enumerate(code):
        if ins.opcode == "JMP":
            leaders.add(ins.operands[0])
        if ins.opcode == "JZ":
            leaders.add(ins.operands[1])
        if ins.opcode in ("JMP", "JZ", "RET") and pc + 1 < n:
            leaders.add(pc + 1)
    starts = sorted(leaders)

    lay = _Layout()
    for k, s in enumerate(starts):
        e = starts[k + 1] if k + 1 < len(starts) else n
        name, cur = f"p{s}", []
        closed = False
        for pc in range(s, e):
            op, a = code[pc].opcode, code[pc].operands
            if op == "CONST":
                cur.append(f"mov r{a[0]}, {a[1]}")
            elif op == "MOV":
                cur.append(f"mov r{a[0]}, r{a[1]}")
            elif op in _ALU_MNEMONIC:
                cur += [f"mov t0, r{a[1]}", f"{_ALU_MNEMONIC[op]} t0, r{a[2]}", f"mov r{a[0]}, t0"]
            elif op in ("LT", "EQ"):
                jcc = "jl" if op == "LT" else "je"
                one, zero, cont = f"p{pc}_1", f"p{pc}_0", f"p{pc}_c"
                cur += [f"cmp r{a[1]}, r{a[2]}", f"{jcc} {{{one}}}", f"jmp {{{zero}}}"]
                lay.add(name, Role.NON_VM, cur, [one, zero])
                lay.add(one, Role.NON_VM, [f"mov r{a[0]}, 1", f"jmp {{{cont}}}"], [cont])
                lay.add(zero, Role.NON_VM, [f"mov r{a[0]}, 0", f"jmp {{{cont}}}"], [cont])
                name, cur = cont, []
            elif op == "LOAD":
                cur += [f"mov t0, r{a[1]}", f"add t0, {a[2]}", f"load r{a[0]}, data[t0]"]
            elif op == "STORE":
                cur += [f"mov t0, r{a[0]}", f"add t0, {a[1]}", f"store data[t0], r{a[2]}"]
            elif op == "JMP":
                cur.append(f"jmp {{p{a[0]}}}")
                lay.add(name, Role.NON_VM, cur, [f"p{a[0]}"])
                closed = True
            elif op == "JZ":
                cur += [f"cmp r{a[0]}, 0", f"je {{p{a[1]}}}", f"jmp {{p{pc + 1}}}"]
                lay.add(name, Role.NON_VM, cur, [f"p{a[1]}", f"p{pc + 1}"])
                closed = True
            elif op == "OUT":
                cur += [f"mov a0, r{a[0]}", "call __out"]
            elif op == "RET":
                cur.append("ret")
                lay.add(name, Role.NON_VM, cur, [])
                closed = True
        if not closed:
            if e >= n:
                raise ValidationError(f"{program.name}: control falls off the end of the program")
            cur.append(f"jmp {{p{e}}}")
            lay.add(name, Role.NON_VM, cur, [f"p{e}"])
    cfg, _truth, _ids = lay.finish(program.name)
    return cfg


def run_native(cfg: Cfg, program: SourceProgram, inputs: Sequence[int], step_budget: int = 16 * DEFAULT_BUDGET) -> list[int]:
    regs = _check_inputs(program, inputs)
    return run_cfg(cfg, regs, {"data": [0] * MEM_SIZE}, step_budget)


# --- interchange ----------------------------------------------------------------------


def truth_labels(truth: dict[int, tuple[Span, ...]]) -> dict[int, tuple[tuple[str, int, int], ...]]:
    return {bid: tuple((s.role.value, s.start, s.end) for s in spans) for bid, spans in truth.items()}


def emit_artifact(artifact: VmArtifact, markers: bool = False) -> str:
    cfg = insert_markers(artifact) if markers else artifact.cfg
    labels = None if markers else truth_labels(artifact.truth)
    return emit_cfg(cfg, meta=artifact.meta(), labels=labels)
