"""Command-line entry point: ``vmlab <subcommand> ...``.

Exit codes: 0 success, 1 stage failure or failed gate, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .cfg import emit_cfg, parse_document
from .classifier import FeatureConfig, Hyper, evaluate, format_report, load_model, report_csv, save_model, train
from .dataset import SplitSpec, build_corpus_report, corpus_artifacts, format_manifest, read_records, segment_record, split, write_records
from .errors import VmlabError
from .ir import builtin, parse_program, random_program
from .labeler import LabelerParams, check_role_map, label_structures
from .pipeline import (
    PipelineConfig,
    StageError,
    UsageError,
    bench_table,
    document_segments,
    document_truth,
    parse_config,
    run_pipeline,
)
from .preprocess import TokenizerMode, reduction_stats
from .roles import CORE_ROLES, parse_kind
from .virtualizer import emit_artifact, optimize, virtualize
from .viz import emit_dot

log = logging.getLogger("vmlab")


def _write(text: str, out: str | None) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")


def _load_program(spec: str):
    """A builtin name, ``random:SEED:SIZE``, or a path to an IR text file."""
    if spec.startswith("random:"):
        _, seed, size = spec.split(":")
        return random_program(int(seed), int(size))
    path = Path(spec)
    if path.exists():
        return parse_program(path.read_text(encoding="utf-8"), path.stem)
    try:
        return builtin(spec)
    except KeyError:
        raise UsageError(f"unknown program {spec!r}: not a builtin, random:SEED:SIZE, or file") from None


def cmd_virtualize(args) -> int:
    prog = _load_program(args.program)
    art = virtualize(prog, parse_kind(args.kind), 0, args.seed)
    if args.opt:
        art = optimize(art)
    _write(emit_artifact(art, markers=args.markers), args.out)
    return 0


def _read_doc(path: str):
    text = sys.stdin.read() if path == "-" else Path(path).read_text(encoding="utf-8")
    return parse_document(text)


def cmd_label(args) -> int:
    """Predicted LABEL records; when the input carries truth labels, a detection row as leading comments."""
    doc = _read_doc(args.input)
    roles = label_structures(doc.cfg, LabelerParams(args.min_fanout))
    check_role_map(doc.cfg, roles)
    labels = {bid: ((role.value, 0, len(doc.cfg.block(bid).instrs)),) for bid, role in roles.items()}
    comments = []
    if doc.labels:
        truth = document_truth(doc)
        for role in CORE_ROLES:
            predicted = {b for b, r in roles.items() if r is role}
            pure = {b for b, spans in truth.items() if {s.role for s in spans} == {role}}
            comments.append(f"detected {role.value} {'✓' if predicted and predicted == pure else '✗'}")
    _write(emit_cfg(doc.cfg, meta=doc.meta, labels=labels, comments=comments), args.out)
    return 0


def cmd_preprocess(args) -> int:
    doc = _read_doc(args.input)
    segs, full = document_segments(doc, args.budget, TokenizerMode(args.tokenizer))
    records = [segment_record(s, int(doc.meta.get("seed", 0))) for s in segs if s.main_label is not None]
    if len(records) != len(segs):
        raise UsageError("input lacks META kind; cannot assign the main label")
    if args.out in (None, "-"):
        for r in records:
            sys.stdout.write(json.dumps(r.to_json(), sort_keys=True, ensure_ascii=False) + "\n")
    else:
        write_records(records, args.out)
    print(f"segments={len(segs)} stream={full} reduction={reduction_stats(segs, full):.4f}", file=sys.stderr)
    return 0


def cmd_dataset(args) -> int:
    cfg = _config(args)
    build = build_corpus_report(corpus_artifacts(cfg.corpus_spec()), cfg.per_class, cfg.budget, cfg.tokenizer, cfg.sample_seed)
    tr, te = split(build.records, SplitSpec(cfg.train_fraction, 1.0 - cfg.train_fraction, cfg.split_seed))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_records(tr, out / "train.jsonl")
    write_records(te, out / "test.jsonl")
    extra = {"per_class": cfg.per_class, "sample_seed": cfg.sample_seed, "split_seed": cfg.split_seed, "program_seed": cfg.program_seed, "virt_seed": cfg.virt_seed, "tokenizer": cfg.tokenizer.value, "budget": cfg.budget}
    (out / "manifest.txt").write_text(format_manifest(tr, te, extra), encoding="utf-8")
    print(f"train={len(tr)} test={len(te)} shortfall={sum(build.shortfall.values())}")
    return 0


def cmd_train(args) -> int:
    records = read_records(args.data)
    model = train(records, FeatureConfig(hash_dim=args.hash_dim), Hyper(args.epochs, args.lr, args.seed))
    save_model(model, args.out)
    print(f"trained on {len(records)} records; final epoch loss {model.train_meta['epoch_loss'][-1]:.6f}" if args.epochs else "trained 0 epochs")
    return 0


def cmd_eval(args) -> int:
    report = evaluate(load_model(args.model), read_records(args.data))
    sys.stdout.write(format_report(report))
    if args.csv:
        Path(args.csv).write_text(report_csv(report), encoding="utf-8")
    return 0


def cmd_viz(args) -> int:
    doc = _read_doc(args.input)
    mixed = frozenset()
    if args.labels == "truth":
        if not doc.labels:
            raise UsageError("--labels truth needs a labeled input")
        truth = document_truth(doc)
        roles = {b: spans[0].role for b, spans in truth.items()}
        mixed = frozenset(b for b, spans in truth.items() if len({s.role for s in spans}) > 1)
    else:
        roles = label_structures(doc.cfg, LabelerParams(args.min_fanout))
    _write(emit_dot(doc.cfg, roles, mixed=mixed, full=args.full), args.out)
    return 0


def cmd_bench_table(args) -> int:
    table = bench_table(_config(args))
    sys.stdout.write(table.text())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "bench_table.txt").write_text(table.text(), encoding="utf-8")
        (out / "bench_table.csv").write_text(table.csv(), encoding="utf-8")
    return 0


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    result = run_pipeline(cfg, args.out)
    ev = result.manifest["eval"]
    print(f"macro_f1={ev['macro_f1']:.4f} main_accuracy={ev['main_accuracy']:.4f} reduction={result.manifest['preprocess']['reduction_ratio']:.4f}")
    for gate, ok in result.gates.items():
        print(f"gate {gate}: {'PASS' if ok else 'FAIL'}")
    return 0 if result.ok else 1


def _config(args) -> PipelineConfig:
    text = Path(args.config).read_text(encoding="utf-8") if getattr(args, "config", None) else ""
    overrides = {}
    flags = (("kind", "kinds"), ("opt", "opt_levels"), ("budget", "budget"), ("tokenizer", "tokenizer"), ("per_class", "per_class"), ("split", "train_fraction"))
    for flag, key in flags:
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = " ".join(map(str, value)) if isinstance(value, list) else str(value)
    if getattr(args, "seed", None) is not None:
        for key in ("sample_seed", "split_seed", "train_seed"):
            overrides[key] = str(args.seed)
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        overrides[key.strip()] = value.strip()
    return parse_config(text, overrides)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vmlab", description="Virtualization-obfuscation testbed.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    tokenizers = [m.value for m in TokenizerMode]

    s = sub.add_parser("virtualize", help="virtualize one program and emit the interchange text")
    s.add_argument("program", help="builtin name, random:SEED:SIZE, or IR file")
    s.add_argument("--kind", default="SWITCH", type=str.upper, choices=["SWITCH", "DIRECT", "INDIRECT"])
    s.add_argument("--opt", type=int, default=0, choices=[0, 1])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--markers", action="store_true", help="encode truth as marker calls instead of LABEL records")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_virtualize)

    s = sub.add_parser("label", help="label a CFG structurally; scores against LABEL records when present")
    s.add_argument("input")
    s.add_argument("--min-fanout", type=int, default=3)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_label)

    s = sub.add_parser("preprocess", help="segment a labeled CFG into JSON Lines records")
    s.add_argument("input")
    s.add_argument("--budget", type=int, default=512)
    s.add_argument("--tokenizer", default="subword", choices=tokenizers)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_preprocess)

    def corpus_flags(s):
        s.add_argument("--config", help="flat key = value file")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
        s.add_argument("--seed", type=int, help="sets the sampling, split and training seeds")
        s.add_argument("--kind", nargs="*", help="dispatch kinds subset")
        s.add_argument("--opt", nargs="*", type=int, help="optimization levels subset")
        s.add_argument("--budget", type=int)
        s.add_argument("--tokenizer", choices=tokenizers)
        s.add_argument("--per-class", type=int, dest="per_class")
        s.add_argument("--split", type=float, help="train fraction of the stratified split")

    s = sub.add_parser("dataset", help="build the balanced corpus and its train/test split")
    corpus_flags(s)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(fn=cmd_dataset)

    s = sub.add_parser("train", help="train the classifier on a JSON Lines file")
    s.add_argument("data")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--epochs", type=int, default=5)
    s.add_argument("--lr", type=float, default=0.1)
    s.add_argument("--hash-dim", type=int, default=1 << 18, dest="hash_dim")
    s.set_defaults(fn=cmd_train)

    s = sub.add_parser("eval", help="evaluate a model on a JSON Lines file")
    s.add_argument("data")
    s.add_argument("--model", required=True)
    s.add_argument("--csv")
    s.set_defaults(fn=cmd_eval)

    s = sub.add_parser("viz", help="render a CFG as color-coded DOT")
    s.add_argument("input")
    s.add_argument("--labels", choices=["pred", "truth"], default="pred")
    s.add_argument("--min-fanout", type=int, default=3)
    s.add_argument("--full", action="store_true", help="show every instruction instead of the first three")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_viz)

    s = sub.add_parser("bench-table", help="identification matrix over the builtin programs")
    corpus_flags(s)
    s.add_argument("--out", help="directory for bench_table.txt and bench_table.csv")
    s.set_defaults(fn=cmd_bench_table)

    s = sub.add_parser("pipeline", help="run every stage and write a manifest")
    corpus_flags(s)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(fn=cmd_pipeline)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except UsageError as exc:
        print(f"vmlab {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"vmlab {args.command}: {exc}", file=sys.stderr)
        return 1
    except (VmlabError, OSError, ValueError) as exc:
        print(f"vmlab {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
