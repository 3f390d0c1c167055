"""Color-coded DOT rendering of a labeled CFG, plus a small DOT syntax checker."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .cfg import Cfg
from .errors import IncompleteRoleMap
from .roles import ROLES, Role

ELLIPSIS = "..."
MAX_LINES = 3

_DEFAULT_COLORS = {
    Role.DISPATCH_START: "red",
    Role.HANDLER: "orange",
    Role.VM: "lightblue",
    Role.VM_START: "green",
    Role.VM_END: "purple",
    Role.NON_VM: "gray",
}


@dataclass(frozen=True)
class ColorScheme:
    colors: dict = field(default_factory=lambda: dict(_DEFAULT_COLORS))

    def __post_init__(self) -> None:
        missing = [r.value for r in ROLES if r not in self.colors]
        if missing:
            raise ValueError(f"color scheme misses roles {missing}")

    def __getitem__(self, role: Role) -> str:
        return self.colors[role]

    def is_injective(self) -> bool:
        return len(set(self.colors.values())) == len(self.colors)


DEFAULT_SCHEME = ColorScheme()


def roles_from_truth(artifact) -> tuple[dict[int, Role], frozenset[int]]:
    """First-span role per block, and the set of mixed blocks."""
    roles = {bid: spans[0].role for bid, spans in artifact.truth.items()}
    mixed = frozenset(bid for bid, spans in artifact.truth.items() if len({s.role for s in spans}) > 1)
    return roles, mixed


def _escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", " ")


def node_label(block_id: int, instrs, full: bool = False) -> str:
    shown = list(instrs) if full else list(instrs[:MAX_LINES])
    if not full and len(instrs) > MAX_LINES:
        shown.append(ELLIPSIS)
    # "\l" is DOT's left-justified line break
    return "\\l".join([f"bb_{block_id}"] + [_escape(s) for s in shown]) + "\\l"


def emit_dot(
    cfg: Cfg,
    roles: dict[int, Role],
    scheme: ColorScheme = DEFAULT_SCHEME,
    mixed: frozenset[int] = frozenset(),
    full: bool = False,
    title: str | None = None,
) -> str:
    missing = [b.id for b in cfg.blocks if b.id not in roles]
    if missing:
        raise IncompleteRoleMap(f"no role for blocks {missing}")
    lines = [f"// {_escape(title or cfg.name)}", f"// blocks={len(cfg.blocks)} edges={len(cfg.edges())}"]
    if not cfg.blocks:
        lines.append("digraph G { }")
        return "\n".join(lines) + "\n"
    lines.append("digraph G {")
    lines.append('  node [shape=box, fontname="monospace"];')
    for b in cfg.blocks:
        role = Role(roles[b.id])
        style = '"filled,dashed"' if b.id in mixed else "filled"
        lines.append(f'  n{b.id} [label="{node_label(b.id, b.instrs, full)}", style={style}, fillcolor={scheme[role]}, tooltip="{role.value}"];')
    for src, dst in cfg.edges():
        lines.append(f"  n{src} -> n{dst};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# --- minimal syntax check ----------------------------------------------------------------

_TOKEN = re.compile(
    r"""\s*(?:
        (?P<comment>//[^\n]*|\#[^\n]*|/\*.*?\*/)
      | (?P<string>"(?:[^"\\]|\\.)*")
      | (?P<arrow>->|--)
      | (?P<punct>[{}\[\];,=])
      | (?P<id>[A-Za-z_][A-Za-z_0-9.]*|-?(?:\d+\.?\d*|\.\d+))
    )""",
    re.X | re.S,
)


def _tokens(text: str) -> list[tuple[str, str]]:
    out, pos = [], 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"unexpected character at offset {pos}: {text[pos:pos + 10]!r}")
        pos = m.end()
        kind = m.lastgroup
        if kind != "comment":
            out.append((kind, m.group(kind)))
    return out


def check_dot(text: str) -> None:
    """Raise ValueError unless ``text`` is a digraph in the DOT subset emitted here.

    Grammar: ``[strict] digraph [ID] { stmt* }`` with node, edge and attribute
    statements, attribute lists ``[a=b, ...]`` and optional ``;`` separators.
    """
    toks = _tokens(text)
    i = 0

    def peek(k=0):
        return toks[i + k] if i + k < len(toks) else ("eof", "")

    def expect(kind, value=None):
        nonlocal i
        t = peek()
        if t[0] != kind or (value is not None and t[1] != value):
            raise ValueError(f"expected {value or kind}, got {t[1]!r}")
        i += 1
        return t

    def ident():
        t = peek()
        if t[0] not in ("id", "string"):
            raise ValueError(f"expected identifier, got {t[1]!r}")
        expect(t[0])

    def attr_list():
        while peek() == ("punct", "["):
            expect("punct", "[")
            while peek() != ("punct", "]"):
                ident()
                expect("punct", "=")
                ident()
                if peek()[1] in (",", ";"):
                    expect("punct")
            expect("punct", "]")

    if peek() == ("id", "strict"):
        expect("id")
    expect("id", "digraph")
    if peek()[0] in ("id", "string"):
        ident()
    expect("punct", "{")
    while peek() != ("punct", "}"):
        if peek()[0] == "eof":
            raise ValueError("unterminated graph body")
        if peek()[1] in ("graph", "node", "edge") and peek(1) == ("punct", "["):
            expect("id")
            attr_list()
        else:
            ident()
            if peek() == ("punct", "="):
                expect("punct")
                ident()
            else:
                while peek()[0] == "arrow":
                    if peek()[1] != "->":
                        raise ValueError("undirected edge in digraph")
                    expect("arrow")
                    ident()
                attr_list()
        if peek() == ("punct", ";"):
            expect("punct")
    expect("punct", "}")
    if peek()[0] != "eof":
        raise ValueError(f"trailing content {peek()[1]!r}")


def count_statements(text: str) -> tuple[int, int]:
    """(node statements, edge statements) by line shape; relies on the one-statement-per-line layout."""
    nodes = edges = 0
    for line in text.splitlines():
        s = line.strip()
        if re.match(r"^n\d+ -> n\d+;$", s):
            edges += 1
        elif re.match(r"^n\d+ \[", s):
            nodes += 1
    return nodes, edges
