"""End-to-end pipeline: virtualize, label, score, preprocess, build the dataset, train, evaluate, render."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import _accel
from .cfg import CfgDocument
from .classifier import FeatureConfig, Hyper, evaluate, format_report, report_csv, save_model, train
from .dataset import CorpusSpec, SplitSpec, build_corpus_report, cell_counts, corpus_artifacts, split, write_records
from .ir import builtin_programs, default_inputs, eval_program
from .labeler import LabelerParams, label_structures, score_against_truth
from .preprocess import Segment, TokenizerMode, reduction_stats, segment_and_merge, segment_artifact, tokenize
from .roles import CORE_ROLES, KINDS, DispatchKind, Role, parse_kind
from .virtualizer import Executable, Span, VmArtifact, optimize, virtualize
from .viz import emit_dot, roles_from_truth

log = logging.getLogger(__name__)

ROLE_TITLES = {Role.VM_START: "VM Start", Role.DISPATCH_START: "Dispatch", Role.HANDLER: "Handler", Role.VM_END: "VM End"}


class UsageError(ValueError):
    """Invalid configuration, detected before any work starts."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    random_programs: int = 300
    include_builtins: bool = True
    min_size: int = 24
    max_size: int = 96
    kinds: tuple[DispatchKind, ...] = KINDS
    opt_levels: tuple[int, ...] = (0, 1)
    budget: int = 512
    tokenizer: TokenizerMode = TokenizerMode.SUBWORD
    per_class: int = 600
    train_fraction: float = 0.8
    min_fanout: int = 3
    program_seed: int = 1
    virt_seed: int = 0
    sample_seed: int = 42
    split_seed: int = 42
    train_seed: int = 42
    epochs: int = 5
    lr: float = 0.1
    hash_dim: int = 1 << 18
    gate_macro_f1: float = 0.95
    gate_main_accuracy: float = 0.85
    gate_reduction: float = 0.90
    gate_bench_pattern: bool = True

    def __post_init__(self) -> None:
        if not self.kinds:
            raise UsageError("kinds must name at least one dispatch kind")
        if not self.opt_levels or any(o not in (0, 1) for o in self.opt_levels):
            raise UsageError(f"opt_levels must be a non-empty subset of {{0, 1}}, got {self.opt_levels}")
        if self.budget < 8:
            raise UsageError("budget must be >= 8")
        if self.per_class < 1 or self.random_programs < 0:
            raise UsageError("per_class must be >= 1 and random_programs >= 0")
        if not 8 <= self.min_size <= self.max_size <= 512:
            raise UsageError("need 8 <= min_size <= max_size <= 512")
        if not 0.0 < self.train_fraction < 1.0:
            raise UsageError("train_fraction must lie in (0, 1)")
        if self.random_programs == 0 and not self.include_builtins:
            raise UsageError("no programs selected")

    def corpus_spec(self) -> CorpusSpec:
        return CorpusSpec(self.random_programs, self.program_seed, self.min_size, self.max_size, self.kinds, self.opt_levels, self.virt_seed, self.include_builtins)

    def to_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [getattr(x, "value", x) for x in v]
            out[f.name] = getattr(v, "value", v)
        return out


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def _convert(name: str, text: str):
    default = getattr(PipelineConfig, name)
    try:
        if name == "kinds":
            return tuple(parse_kind(t) for t in text.replace(",", " ").split())
        if name == "opt_levels":
            return tuple(int(t) for t in text.replace(",", " ").split())
        if name == "tokenizer":
            return TokenizerMode(text.strip().lower())
        if isinstance(default, bool):
            return _parse_bool(text)
        if isinstance(default, int):
            return int(text, 0)
        if isinstance(default, float):
            return float(text)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{name}: {exc}") from None
    raise UsageError(f"unsupported key {name}")  # pragma: no cover


def parse_config(text: str, overrides: dict[str, str] | None = None) -> PipelineConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment. Unknown keys are errors."""
    names = {f.name for f in dataclasses.fields(PipelineConfig)}
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or key not in names:
            raise UsageError(f"config line {lineno}: expected one of the known keys as key = value, got {line!r}")
        raw[key] = value.strip()
    raw.update({k.replace("-", "_"): v for k, v in (overrides or {}).items()})
    unknown = set(raw) - names
    if unknown:
        raise UsageError(f"unknown config keys {sorted(unknown)}")
    return PipelineConfig(**{k: _convert(k, v) for k, v in raw.items()})


def format_config(config: PipelineConfig) -> str:
    lines = []
    for k, v in config.to_dict().items():
        lines.append(f"{k} = {' '.join(map(str, v)) if isinstance(v, list) else v}")
    return "\n".join(lines) + "\n"


# --- Table-1 style matrix ---------------------------------------------------------------


@dataclass(frozen=True)
class BenchTable:
    programs: tuple[str, ...]
    columns: tuple[tuple[int, DispatchKind], ...]
    cells: dict  # (program, role, opt, kind) -> bool

    def rows(self) -> list[tuple[str, Role, list[bool]]]:
        return [(p, r, [self.cells[(p, r, o, k)] for o, k in self.columns]) for p in self.programs for r in CORE_ROLES]

    def text(self) -> str:
        head = ["program", "role"] + [f"O{o}/{k.value.lower()}" for o, k in self.columns]
        body = [[p, ROLE_TITLES[r]] + ["✓" if v else "✗" for v in vals] for p, r, vals in self.rows()]
        widths = [max(len(row[i]) for row in [head] + body) for i in range(len(head))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [head] + body) + "\n"

    def csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["program", "role"] + [f"opt{o}_{k.value.lower()}" for o, k in self.columns])
        for p, r, vals in self.rows():
            wr.writerow([p, r.value] + [int(v) for v in vals])
        return buf.getvalue()

    def expected(self, opt: int, role: Role) -> bool:
        return opt == 0 or role in (Role.DISPATCH_START, Role.HANDLER)

    def pattern_holds(self) -> bool:
        return all(v == self.expected(o, r) for (_p, r, o, _k), v in self.cells.items())


def builtin_artifacts(kinds: Sequence[DispatchKind] = KINDS, opt_levels: Sequence[int] = (0, 1), seed: int = 0) -> list[VmArtifact]:
    out = []
    for prog in builtin_programs():
        for kind in kinds:
            base = virtualize(prog, kind, 0, seed)
            out.extend(base if opt == 0 else optimize(base) for opt in opt_levels)
    return out


def bench_table(config: PipelineConfig = PipelineConfig()) -> BenchTable:
    params = LabelerParams(config.min_fanout)
    cells = {}
    for art in builtin_artifacts(config.kinds, config.opt_levels, config.virt_seed):
        row = score_against_truth(label_structures(art.cfg, params), art)
        for role in CORE_ROLES:
            cells[(art.program.name, role, art.opt_level, art.kind)] = row[role]
    programs = tuple(p.name for p in builtin_programs())
    columns = tuple((o, k) for o in config.opt_levels for k in config.kinds)
    return BenchTable(programs, columns, cells)


# --- documents --------------------------------------------------------------------------


def document_truth(doc: CfgDocument) -> dict[int, tuple[Span, ...]]:
    return {bid: tuple(Span(s, e, Role(r)) for r, s, e in spans) for bid, spans in doc.labels.items()}


def document_segments(doc: CfgDocument, budget: int, mode: TokenizerMode) -> tuple[list[Segment], int]:
    """Segments of a labeled interchange document (labels required on every block)."""
    truth = document_truth(doc)
    missing = [b.id for b in doc.cfg.blocks if b.id not in truth]
    if missing:
        raise ValueError(f"blocks without labels: {missing}")
    units = [(tokenize(b.instrs[s.start : s.end], mode), s.role, b.id) for b in doc.cfg.blocks for s in truth[b.id]]
    kind = DispatchKind(doc.meta["kind"]) if "kind" in doc.meta else None
    segs = segment_and_merge(units, budget, kind, doc.meta.get("program", doc.cfg.name), int(doc.meta.get("opt", 0)))
    return segs, sum(len(u[0]) for u in units)


# --- pipeline ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _stage(name: str):
    def wrap(fn):
        def run(*args, **kwargs):
            log.info("stage %s", name)
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc

        return run

    return wrap


@_stage("virtualize")
def _virtualize(config: PipelineConfig) -> list[VmArtifact]:
    return corpus_artifacts(config.corpus_spec())


@_stage("semantics")
def _semantics(config: PipelineConfig) -> dict:
    checked = failed = 0
    for art in builtin_artifacts(config.kinds, config.opt_levels, config.virt_seed):
        run = Executable(art)
        for inputs in default_inputs(art.program):
            checked += 1
            if run(inputs) != eval_program(art.program, inputs):
                failed += 1
    return {"checked": checked, "failed": failed}


@_stage("label")
def _label(config: PipelineConfig, artifacts: Sequence[VmArtifact]) -> dict:
    params = LabelerParams(config.min_fanout)
    detected: dict[str, int] = {}
    totals: dict[str, int] = {}
    for art in artifacts:
        row = score_against_truth(label_structures(art.cfg, params), art)
        for role in CORE_ROLES:
            key = f"opt{art.opt_level}/{role.value}"
            totals[key] = totals.get(key, 0) + 1
            detected[key] = detected.get(key, 0) + int(row[role])
    return {k: f"{detected[k]}/{totals[k]}" for k in sorted(totals)}


@_stage("preprocess")
def _preprocess(config: PipelineConfig, artifacts: Sequence[VmArtifact]) -> dict:
    ratios, longest, n_segments = [], 0, 0
    for art in artifacts:
        segs, full = segment_artifact(art, config.budget, config.tokenizer)
        ratios.append(reduction_stats(segs, full))
        longest = max(longest, max(len(s.tokens) for s in segs))
        n_segments += len(segs)
    return {"reduction_ratio": round(sum(ratios) / len(ratios), 6), "max_segment_tokens": longest, "segments": n_segments}


@_stage("dataset")
def _dataset(config: PipelineConfig, artifacts, out: Path):
    build = build_corpus_report(artifacts, config.per_class, config.budget, config.tokenizer, config.sample_seed)
    train_set, test_set = split(build.records, SplitSpec(config.train_fraction, 1.0 - config.train_fraction, config.split_seed))
    write_records(train_set, out / "train.jsonl")
    write_records(test_set, out / "test.jsonl")
    info = {
        "records": len(build.records),
        "train": len(train_set),
        "test": len(test_set),
        "shortfall": {f"{k.value}/{r.value}": n for (k, r), n in build.shortfall.items()},
        "cells": {f"{k.value}/{r.value}": n for (k, r), n in cell_counts(build.records).items() if n},
    }
    return train_set, test_set, info


@_stage("train")
def _train(config: PipelineConfig, train_set, out: Path):
    model = train(train_set, FeatureConfig(hash_dim=config.hash_dim), Hyper(config.epochs, config.lr, config.train_seed))
    save_model(model, out / "model.npz")
    return model


@_stage("eval")
def _eval(model, test_set, out: Path):
    report = evaluate(model, test_set)
    (out / "report.txt").write_text(format_report(report), encoding="utf-8")
    (out / "report.csv").write_text(report_csv(report), encoding="utf-8")
    return report


@_stage("viz")
def _viz(config: PipelineConfig, out: Path) -> list[str]:
    vdir = out / "viz"
    vdir.mkdir(exist_ok=True)
    params = LabelerParams(config.min_fanout)
    names = []
    for art in builtin_artifacts(config.kinds, config.opt_levels, config.virt_seed):
        stem = f"{art.program.name}-{art.kind.value.lower()}-O{art.opt_level}"
        truth, mixed = roles_from_truth(art)
        (vdir / f"{stem}-truth.dot").write_text(emit_dot(art.cfg, truth, mixed=mixed, title=f"{stem} truth"), encoding="utf-8")
        (vdir / f"{stem}-pred.dot").write_text(emit_dot(art.cfg, label_structures(art.cfg, params), title=f"{stem} predicted"), encoding="utf-8")
        names += [f"viz/{stem}-truth.dot", f"viz/{stem}-pred.dot"]
    return names


@dataclass
class PipelineResult:
    manifest: dict
    gates: dict[str, bool]

    @property
    def ok(self) -> bool:
        return all(self.gates.values())


def run_pipeline(config: PipelineConfig, out: str | Path) -> PipelineResult:
    """Run every stage and write ``manifest.json`` into ``out``. Raises StageError on failure."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = _virtualize(config)
    semantics = _semantics(config)
    table = bench_table(config)
    (out / "bench_table.txt").write_text(table.text(), encoding="utf-8")
    (out / "bench_table.csv").write_text(table.csv(), encoding="utf-8")
    detection = _label(config, artifacts)
    prep = _preprocess(config, artifacts)
    train_set, test_set, data_info = _dataset(config, artifacts, out)
    model = _train(config, train_set, out)
    report = _eval(model, test_set, out)
    dots = _viz(config, out)

    gates = {
        "semantics": semantics["failed"] == 0,
        "bench_pattern": table.pattern_holds() or not config.gate_bench_pattern,
        "max_segment_tokens": prep["max_segment_tokens"] <= config.budget,
        "reduction_ratio": prep["reduction_ratio"] >= config.gate_reduction,
        "macro_f1": report.macro_f1 >= config.gate_macro_f1,
        "main_accuracy": report.main_accuracy >= config.gate_main_accuracy,
    }
    files = ["bench_table.txt", "bench_table.csv", "train.jsonl", "test.jsonl", "model.npz", "report.txt", "report.csv", *dots]
    manifest = {
        "config": config.to_dict(),
        "backend": _accel.backend(),
        "artifacts": len(artifacts),
        "semantics": semantics,
        "bench_table": [[p, r.value, *[int(v) for v in vals]] for p, r, vals in table.rows()],
        "bench_columns": [f"opt{o}/{k.value}" for o, k in table.columns],
        "labeler_detection": detection,
        "preprocess": prep,
        "dataset": data_info,
        "train_meta": model.train_meta,
        "eval": report.to_dict(),
        "gates": gates,
        "files": {name: _sha256(out / name) for name in files},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")
    return PipelineResult(manifest, gates)
