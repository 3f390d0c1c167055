"""Tokenization and token-budget segmentation of labeled blocks."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

from .errors import EmptyInput
from .machine import MARKER_PREFIX, is_marker, split_instr
from .roles import DispatchKind, Role

DEFAULT_BUDGET = 512
CHUNK = 6

_PIECE = re.compile(r"[a-z0-9_]+|[^\sa-z0-9_]")
_INT = re.compile(r"^-?\d+$")
_LABEL = re.compile(r"^bb_\d+$")


class TokenizerMode(str, Enum):
    SUBWORD = "subword"
    NORMALIZED = "normalized"

    def __str__(self) -> str:
        return self.value


def _subword(text: str) -> list[str]:
    out = []
    for piece in _PIECE.findall(text.lower()):
        if len(piece) > CHUNK:
            out.extend("##" + piece[i : i + CHUNK] for i in range(0, len(piece), CHUNK))
        else:
            out.append(piece)
    return out


def _operand_class(tok: str) -> str:
    if "[" in tok:
        return "MEM"
    if _INT.match(tok):
        return "IMM"
    if _LABEL.match(tok) or tok.startswith("__"):
        return "ADDR"
    return "REG"


def _normalized(text: str) -> list[str]:
    if is_marker(text) or MARKER_PREFIX in text:
        return []
    mnemonic, operands = split_instr(text)
    return [mnemonic] + [_operand_class(o) for o in operands]


def tokenize(instrs: Iterable[str], mode: TokenizerMode = TokenizerMode.SUBWORD) -> list[str]:
    """SUBWORD: lowercase, split on whitespace and punctuation (punctuation kept as
    tokens), pieces longer than six characters become ``##``-prefixed chunks.
    NORMALIZED: mnemonic plus one class token (REG/IMM/ADDR/MEM) per operand."""
    fn = _subword if TokenizerMode(mode) is TokenizerMode.SUBWORD else _normalized
    out: list[str] = []
    for ins in instrs:
        out.extend(fn(ins))
    return out


@dataclass(frozen=True)
class Segment:
    tokens: tuple[str, ...]
    sub_label: Role
    main_label: DispatchKind | None
    program: str = ""
    opt: int = 0
    blocks: tuple[int, int] = (0, 0)  # first and last source block id of the run
    chunk: int = 0


Unit = tuple  # (tokens, role) or (tokens, role, block_id)


def segment_and_merge(
    blocks: Sequence[Unit],
    budget: int = DEFAULT_BUDGET,
    main_label: DispatchKind | None = None,
    program: str = "",
    opt: int = 0,
) -> list[Segment]:
    """Merge adjacent same-role units; split each run greedily into ``budget``-sized chunks."""
    if budget < 8:
        raise ValueError(f"budget must be >= 8, got {budget}")
    runs: list[tuple[Role, list[str], int, int]] = []
    for pos, unit in enumerate(blocks):
        tokens, role = unit[0], Role(unit[1])
        bid = unit[2] if len(unit) > 2 else pos
        if runs and runs[-1][0] is role:
            runs[-1][1].extend(tokens)
            runs[-1] = (role, runs[-1][1], runs[-1][2], bid)
        else:
            runs.append((role, list(tokens), bid, bid))
    out = []
    for role, stream, first, last in runs:
        for chunk, i in enumerate(range(0, len(stream), budget)):
            out.append(Segment(tuple(stream[i : i + budget]), role, main_label, program, opt, (first, last), chunk))
    return out


def artifact_units(artifact, mode: TokenizerMode = TokenizerMode.SUBWORD) -> list[tuple[list[str], Role, int]]:
    """Tokenized truth spans in layout order (mixed blocks contribute one unit per span)."""
    units = []
    for b in artifact.cfg.blocks:
        for span in artifact.truth[b.id]:
            units.append((tokenize(b.instrs[span.start : span.end], mode), span.role, b.id))
    return units


def segment_artifact(artifact, budget: int = DEFAULT_BUDGET, mode: TokenizerMode = TokenizerMode.SUBWORD) -> tuple[list[Segment], int]:
    """Segments of one artifact and the length of its whole-function token stream."""
    units = artifact_units(artifact, mode)
    full = sum(len(u[0]) for u in units)
    segs = segment_and_merge(units, budget, artifact.kind, artifact.program.name, artifact.opt_level)
    return segs, full


def reduction_stats(segments: Sequence[Segment], full_stream_len: int) -> float:
    """1 - mean segment length / whole-function stream length."""
    if not segments:
        raise EmptyInput("no segments")
    if full_stream_len <= 0:
        raise ValueError("full_stream_len must be positive")
    mean = sum(len(s.tokens) for s in segments) / len(segments)
    return 1.0 - mean / full_stream_len
