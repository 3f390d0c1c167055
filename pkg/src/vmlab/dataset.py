"""Balanced corpus construction, stratified splitting and JSON Lines records."""

from __future__ import annotations

import hashlib
import json
import logging
import random
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyInput, ParseError
from .ir import builtin_programs, random_program
from .preprocess import DEFAULT_BUDGET, Segment, TokenizerMode, segment_artifact
from .roles import KINDS, ROLES, DispatchKind, Role
from .virtualizer import VmArtifact, optimize, virtualize

log = logging.getLogger(__name__)

RECORD_FIELDS = ("id", "main_label", "sub_label", "tokens", "meta")
Cell = tuple[DispatchKind, Role]


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    main_label: DispatchKind
    sub_label: Role
    tokens: tuple[str, ...]
    meta: dict = field(default_factory=dict, hash=False)

    @property
    def cell(self) -> Cell:
        return (self.main_label, self.sub_label)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "main_label": self.main_label.value,
            "sub_label": self.sub_label.value,
            "tokens": list(self.tokens),
            "meta": self.meta,
        }


def record_id(tokens: Sequence[str], main: DispatchKind, sub: Role, meta: dict) -> str:
    payload = json.dumps([list(tokens), main.value, sub.value, meta], sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()[:20]


def make_record(tokens: Sequence[str], main: DispatchKind, sub: Role, meta: dict) -> DatasetRecord:
    return DatasetRecord(record_id(tokens, main, sub, meta), DispatchKind(main), Role(sub), tuple(tokens), meta)


def segment_record(seg: Segment, seed: int) -> DatasetRecord:
    meta = {"program": seg.program, "opt": seg.opt, "seed": seed, "chunk": seg.chunk, "blocks": list(seg.blocks)}
    return make_record(seg.tokens, seg.main_label, seg.sub_label, meta)


# --- corpus ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusSpec:
    """Which artifacts make up a corpus. Program sizes are drawn per seed from [min_size, max_size]."""

    random_programs: int = 300
    program_seed: int = 1
    min_size: int = 24
    max_size: int = 96
    kinds: tuple[DispatchKind, ...] = KINDS
    opt_levels: tuple[int, ...] = (0, 1)
    virt_seed: int = 0
    include_builtins: bool = True


def corpus_programs(spec: CorpusSpec):
    progs = list(builtin_programs()) if spec.include_builtins else []
    span = spec.max_size - spec.min_size + 1
    for i in range(spec.random_programs):
        seed = spec.program_seed * 100_003 + i
        size = spec.min_size + random.Random(f"vmlab-size-{seed}").randrange(span)
        progs.append(random_program(seed, size))
    return progs


def corpus_artifacts(spec: CorpusSpec = CorpusSpec()) -> list[VmArtifact]:
    """Deterministic artifact list, ordered by (program, kind, opt)."""
    out = []
    for prog in corpus_programs(spec):
        for kind in spec.kinds:
            base = virtualize(prog, kind, 0, spec.virt_seed)
            for opt in spec.opt_levels:
                out.append(base if opt == 0 else optimize(base))
    return out


@dataclass
class CorpusBuild:
    records: list[DatasetRecord]
    available: dict[Cell, int]
    shortfall: dict[Cell, int]


def build_corpus_report(
    artifacts: Sequence[VmArtifact],
    per_class: int,
    budget: int = DEFAULT_BUDGET,
    mode: TokenizerMode = TokenizerMode.SUBWORD,
    seed: int = 42,
) -> CorpusBuild:
    if not artifacts:
        raise EmptyInput("no artifacts")
    pool: dict[Cell, dict[str, DatasetRecord]] = {(k, r): {} for k in KINDS for r in ROLES}
    for art in artifacts:
        segs, _full = segment_artifact(art, budget, mode)
        for seg in segs:
            rec = segment_record(seg, art.seed)
            pool[rec.cell].setdefault(rec.id, rec)

    rng = random.Random(seed)
    records, available, shortfall = [], {}, {}
    for cell in sorted(pool, key=lambda c: (KINDS.index(c[0]), ROLES.index(c[1]))):
        candidates = sorted(pool[cell].values(), key=lambda r: r.id)
        available[cell] = len(candidates)
        if len(candidates) < per_class:
            shortfall[cell] = per_class - len(candidates)
            log.warning("cell %s/%s: %d available, %d short", cell[0].value, cell[1].value, len(candidates), shortfall[cell])
        records.extend(rng.sample(candidates, min(per_class, len(candidates))))
    return CorpusBuild(records, available, shortfall)


def build_corpus(
    artifacts: Sequence[VmArtifact],
    per_class: int,
    budget: int = DEFAULT_BUDGET,
    mode: TokenizerMode = TokenizerMode.SUBWORD,
    seed: int = 42,
) -> list[DatasetRecord]:
    """Up to ``per_class`` records per (dispatch kind, role) cell, sampled without replacement."""
    return build_corpus_report(artifacts, per_class, budget, mode, seed).records


# --- splitting --------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    test_fraction: float = 0.2
    seed: int = 42

    def __post_init__(self) -> None:
        if abs(self.train_fraction + self.test_fraction - 1.0) > 1e-9:
            raise ValueError("train and test fractions must sum to 1")
        if not 0.0 <= self.train_fraction <= 1.0:
            raise ValueError("fractions must lie in [0, 1]")


def largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    quotas = [n * f for f in fractions]
    counts = [int(q) for q in quotas]
    order = sorted(range(len(fractions)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _stratify(records: Iterable[DatasetRecord]) -> dict[Cell, list[DatasetRecord]]:
    cells: dict[Cell, list[DatasetRecord]] = defaultdict(list)
    for r in records:
        cells[r.cell].append(r)
    return cells


def split(records: Sequence[DatasetRecord], spec: SplitSpec = SplitSpec()) -> tuple[list[DatasetRecord], list[DatasetRecord]]:
    """Stratified by (main, sub) cell; per-cell sizes by largest-remainder rounding."""
    if not records:
        raise EmptyInput("no records to split")
    rng = random.Random(spec.seed)
    train, test = [], []
    cells = _stratify(records)
    for cell in sorted(cells, key=lambda c: (KINDS.index(c[0]), ROLES.index(c[1]))):
        items = sorted(cells[cell], key=lambda r: r.id)
        rng.shuffle(items)
        n_train, _n_test = largest_remainder(len(items), (spec.train_fraction, spec.test_fraction))
        train.extend(items[:n_train])
        test.extend(items[n_train:])
    return train, test


def validation_split(train: Sequence[DatasetRecord], fraction: float, seed: int = 42):
    """Carve an inner validation set out of a training split, stratified the same way."""
    inner = SplitSpec(1.0 - fraction, fraction, seed)
    return split(train, inner)


def cell_counts(records: Iterable[DatasetRecord]) -> dict[Cell, int]:
    counts = {(k, r): 0 for k in KINDS for r in ROLES}
    for rec in records:
        counts[rec.cell] += 1
    return counts


# --- persistence -------------------------------------------------------------------------


def write_records(records: Iterable[DatasetRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True, ensure_ascii=False) + "\n")


def parse_record(line: str, lineno: int | None = None) -> DatasetRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
    if not isinstance(obj, dict) or set(obj) != set(RECORD_FIELDS):
        got = sorted(obj) if isinstance(obj, dict) else type(obj).__name__
        raise ParseError(f"record fields must be {list(RECORD_FIELDS)}, got {got}", lineno)
    try:
        main, sub = DispatchKind(obj["main_label"]), Role(obj["sub_label"])
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None
    tokens = obj["tokens"]
    if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) for t in tokens):
        raise ParseError("tokens must be a non-empty list of strings", lineno)
    if not isinstance(obj["meta"], dict) or not isinstance(obj["id"], str):
        raise ParseError("bad id or meta", lineno)
    return DatasetRecord(obj["id"], main, sub, tuple(tokens), obj["meta"])


def read_records(path: str | Path) -> list[DatasetRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                out.append(parse_record(line, lineno))
    return out


def format_manifest(train: Sequence[DatasetRecord], test: Sequence[DatasetRecord], extra: dict | None = None) -> str:
    lines = [f"{k} = {v}" for k, v in (extra or {}).items()]
    lines.append(f"train = {len(train)}")
    lines.append(f"test = {len(test)}")
    tr, te = cell_counts(train), cell_counts(test)
    lines.append("# cell: train test")
    for cell in tr:
        lines.append(f"{cell[0].value}/{cell[1].value}: {tr[cell]} {te[cell]}")
    return "\n".join(lines) + "\n"
