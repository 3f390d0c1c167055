"""Control-flow graph model, graph queries and the line-based interchange format.

Interchange records (one per line)::

    FUNC <name>
    META <key> <value>
    BLOCK <id>
    INS <instruction text>
    EDGE <src> <dst>
    LABEL <id> <ROLE>[@<start>:<end>] ...

``EDGE`` and ``LABEL`` lines follow every ``BLOCK`` section. Lines starting
with ``#`` are comments. The entry block is the first block unless a
``META entry <id>`` record says otherwise.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import BlockNotFound, ParseError, ValidationError
from .roles import Role


@dataclass(frozen=True)
class BasicBlock:
    id: int
    instrs: tuple[str, ...] = ()
    succs: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "instrs", tuple(self.instrs))
        object.__setattr__(self, "succs", tuple(self.succs))
        if self.id < 0:
            raise ValidationError(f"negative block id {self.id}")
        if len(set(self.succs)) != len(self.succs):
            raise ValidationError(f"block {self.id} has duplicate successors")


@dataclass(frozen=True)
class Cfg:
    name: str
    entry: int
    blocks: tuple[BasicBlock, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(self.blocks))
        index: dict[int, BasicBlock] = {}
        for b in self.blocks:
            if b.id in index:
                raise ValidationError(f"duplicate block id {b.id}")
            index[b.id] = b
        for b in self.blocks:
            for s in b.succs:
                if s not in index:
                    raise ValidationError(f"edge {b.id} -> {s} targets a missing block")
        # a block-less cfg is the degenerate empty function
        if self.blocks and self.entry not in index:
            raise ValidationError(f"entry {self.entry} not in cfg")
        object.__setattr__(self, "_index", index)

    def block(self, block_id: int) -> BasicBlock:
        try:
            return self._index[block_id]
        except KeyError:
            raise BlockNotFound(block_id) from None

    def __contains__(self, block_id: object) -> bool:
        return block_id in self._index

    @property
    def ids(self) -> list[int]:
        return [b.id for b in self.blocks]

    def edges(self) -> list[tuple[int, int]]:
        return [(b.id, s) for b in self.blocks for s in b.succs]

    def successors(self, block_id: int) -> tuple[int, ...]:
        return self.block(block_id).succs


def build_cfg(
    name: str,
    blocks: Iterable[tuple[int, Sequence[str], Sequence[int]]],
    entry: int | None = None,
) -> Cfg:
    """Build a cfg from ``(id, instrs, succs)`` triples; parallel edges collapse."""
    bbs = []
    for bid, instrs, succs in blocks:
        bbs.append(BasicBlock(bid, tuple(instrs), tuple(dict.fromkeys(succs))))
    if entry is None:
        entry = bbs[0].id if bbs else 0
    return Cfg(name, entry, tuple(bbs))


def out_degree(cfg: Cfg, block_id: int) -> int:
    return len(cfg.block(block_id).succs)


def predecessors(cfg: Cfg, block_id: int) -> frozenset[int]:
    cfg.block(block_id)
    return frozenset(b.id for b in cfg.blocks if block_id in b.succs)


def predecessor_map(cfg: Cfg) -> dict[int, list[int]]:
    preds: dict[int, list[int]] = {b.id: [] for b in cfg.blocks}
    for b in cfg.blocks:
        for s in b.succs:
            preds[s].append(b.id)
    return preds


def reachable_from(cfg: Cfg, start: int, reverse: bool = False) -> set[int]:
    """Blocks reachable from ``start`` (inclusive), following edges backwards if ``reverse``."""
    cfg.block(start)
    adj = predecessor_map(cfg) if reverse else {b.id: b.succs for b in cfg.blocks}
    seen = {start}
    todo = deque([start])
    while todo:
        for nxt in adj[todo.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                todo.append(nxt)
    return seen


def scc_of(cfg: Cfg, block_id: int) -> frozenset[int]:
    """Maximal strongly connected component containing ``block_id``."""
    fwd = reachable_from(cfg, block_id)
    bwd = reachable_from(cfg, block_id, reverse=True)
    return frozenset(fwd & bwd)


def is_trivial_scc(cfg: Cfg, members: frozenset[int]) -> bool:
    """A singleton component without a self-loop."""
    if len(members) != 1:
        return False
    (only,) = members
    return only not in cfg.block(only).succs


def dead_blocks(cfg: Cfg) -> frozenset[int]:
    """Blocks unreachable from the entry. They are kept in the graph, only flagged."""
    if not cfg.blocks:
        return frozenset()
    live = reachable_from(cfg, cfg.entry)
    return frozenset(b.id for b in cfg.blocks if b.id not in live)


# --- interchange format -----------------------------------------------------

LabelSpan = tuple[str, int, int]


@dataclass(frozen=True)
class CfgDocument:
    """A parsed interchange file: the graph plus its META and LABEL records."""

    cfg: Cfg
    meta: dict[str, str] = field(default_factory=dict)
    labels: dict[int, tuple[LabelSpan, ...]] = field(default_factory=dict)


def _fmt_label(block: BasicBlock, spans: Sequence[LabelSpan]) -> str:
    if len(spans) == 1 and spans[0][1] == 0 and spans[0][2] == len(block.instrs):
        return f"LABEL {block.id} {spans[0][0]}"
    parts = " ".join(f"{role}@{start}:{end}" for role, start, end in spans)
    return f"LABEL {block.id} {parts}"


def emit_cfg(
    cfg: Cfg,
    meta: Mapping[str, object] | None = None,
    labels: Mapping[int, Sequence[LabelSpan]] | None = None,
    comments: Sequence[str] = (),
) -> str:
    lines = [f"# {c}" for c in comments]
    lines.append(f"FUNC {cfg.name}")
    for key, value in (meta or {}).items():
        lines.append(f"META {key} {value}")
    if cfg.blocks and cfg.entry != cfg.blocks[0].id:
        lines.append(f"META entry {cfg.entry}")
    for b in cfg.blocks:
        lines.append(f"BLOCK {b.id}")
        lines.extend(f"INS {ins}" for ins in b.instrs)
    for src, dst in cfg.edges():
        lines.append(f"EDGE {src} {dst}")
    if labels:
        for b in cfg.blocks:
            if b.id in labels:
                lines.append(_fmt_label(b, labels[b.id]))
    return "\n".join(lines) + "\n"


def _int(text: str, lineno: int) -> int:
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"expected an integer, got {text!r}", lineno) from None


def _parse_label_token(tok: str, n_instrs: int, lineno: int) -> LabelSpan:
    role, at, rng = tok.partition("@")
    if role not in {r.value for r in Role}:
        raise ParseError(f"unknown role {role!r}", lineno)
    if not at:
        return (role, 0, n_instrs)
    start, sep, end = rng.partition(":")
    if not sep:
        raise ParseError(f"bad label span {tok!r}", lineno)
    return (role, _int(start, lineno), _int(end, lineno))


def _check_spans(bid: int, spans: Sequence[LabelSpan], n_instrs: int, lineno: int) -> None:
    pos = 0
    for _role, start, end in spans:
        if start != pos or end < start:
            raise ParseError(f"block {bid}: label spans must be contiguous from 0", lineno)
        pos = end
    if pos != n_instrs:
        raise ParseError(f"block {bid}: label spans cover {pos} of {n_instrs} instructions", lineno)


def parse_document(text: str) -> CfgDocument:
    name: str | None = None
    meta: dict[str, str] = {}
    order: list[int] = []
    instrs: dict[int, list[str]] = {}
    succs: dict[int, list[int]] = {}
    raw_labels: list[tuple[int, int, list[str]]] = []
    current: int | None = None
    seen_edges = False

    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        head, _, rest = line.partition(" ")
        if head == "FUNC":
            if name is not None:
                raise ParseError("second FUNC record in one document", lineno)
            if not rest.strip():
                raise ParseError("FUNC without a name", lineno)
            name = rest.strip()
        elif name is None:
            raise ParseError(f"{head} record before FUNC", lineno)
        elif head == "META":
            key, _, value = rest.strip().partition(" ")
            if not key:
                raise ParseError("META without a key", lineno)
            meta[key] = value.strip()
        elif head == "BLOCK":
            if seen_edges:
                raise ParseError("BLOCK after EDGE/LABEL records", lineno)
            bid = _int(rest.strip(), lineno)
            if bid in instrs:
                raise ValidationError(f"line {lineno}: duplicate block id {bid}")
            if bid < 0:
                raise ParseError(f"negative block id {bid}", lineno)
            order.append(bid)
            instrs[bid] = []
            succs[bid] = []
            current = bid
        elif head == "INS":
            if current is None or seen_edges:
                raise ParseError("INS outside a BLOCK section", lineno)
            if not rest.strip():
                raise ParseError("empty INS record", lineno)
            instrs[current].append(rest)
        elif head == "EDGE":
            seen_edges = True
            parts = rest.split()
            if len(parts) != 2:
                raise ParseError("EDGE needs exactly two block ids", lineno)
            src, dst = (_int(p, lineno) for p in parts)
            if src not in succs or dst not in succs:
                raise ValidationError(f"line {lineno}: dangling edge {src} -> {dst}")
            if dst not in succs[src]:
                succs[src].append(dst)
        elif head == "LABEL":
            seen_edges = True
            parts = rest.split()
            if len(parts) < 2:
                raise ParseError("LABEL needs a block id and a role", lineno)
            raw_labels.append((lineno, _int(parts[0], lineno), parts[1:]))
        else:
            raise ParseError(f"unknown record {head!r}", lineno)

    if name is None:
        raise ParseError("missing FUNC record")
    entry = order[0] if order else 0
    if "entry" in meta:
        entry = _int(meta.pop("entry"), 0)
    cfg = Cfg(name, entry, tuple(BasicBlock(b, tuple(instrs[b]), tuple(succs[b])) for b in order))

    labels: dict[int, list[LabelSpan]] = {}
    for lineno, bid, toks in raw_labels:
        if bid not in instrs:
            raise ValidationError(f"line {lineno}: LABEL for missing block {bid}")
        if bid in labels:
            raise ParseError(f"second LABEL record for block {bid}", lineno)
        n = len(instrs[bid])
        labels[bid] = [_parse_label_token(t, n, lineno) for t in toks]
        _check_spans(bid, labels[bid], n, lineno)
    return CfgDocument(cfg, meta, {k: tuple(v) for k, v in labels.items()})


def parse_cfg(text: str) -> Cfg:
    return parse_document(text).cfg
