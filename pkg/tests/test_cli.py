from __future__ import annotations

import pytest

from vmlab.cfg import parse_document
from vmlab.cli import main
from vmlab.dataset import read_records
from vmlab.pipeline import PipelineConfig, UsageError, bench_table, format_config, parse_config
from vmlab.roles import CORE_ROLES, DispatchKind, Role
from vmlab.viz import check_dot


def test_virtualize_label_viz(tmp_path, capsys):
    art = tmp_path / "f.cfg"
    assert main(["virtualize", "factorial", "--kind", "direct", "--opt", "1", "--out", str(art)]) == 0
    assert parse_document(art.read_text()).meta["kind"] == "DIRECT"
    out = tmp_path / "l.cfg"
    assert main(["label", str(art), "--out", str(out)]) == 0
    text = out.read_text()
    assert "# detected DISPATCH-START ✓" in text and "# detected VM-START ✗" in text
    doc = parse_document(text)
    assert set(doc.labels) == set(doc.cfg.ids)
    for mode in ("pred", "truth"):
        dot = tmp_path / f"{mode}.dot"
        assert main(["viz", str(art), "--labels", mode, "--out", str(dot)]) == 0
        check_dot(dot.read_text())


def test_virtualize_markers_stdout(capsys):
    assert main(["virtualize", "fibonacci", "--markers"]) == 0
    assert "INS call __vmlab_DISPATCH-START" in capsys.readouterr().out


def test_preprocess_writes_records(tmp_path, capsys):
    art = tmp_path / "f.cfg"
    main(["virtualize", "random:5:40", "--kind", "indirect", "--out", str(art)])
    out = tmp_path / "s.jsonl"
    assert main(["preprocess", str(art), "--budget", "16", "--tokenizer", "normalized", "--out", str(out)]) == 0
    recs = read_records(out)
    assert recs and all(len(r.tokens) <= 16 and r.main_label is DispatchKind.INDIRECT for r in recs)
    assert "reduction=" in capsys.readouterr().err


def test_dataset_train_eval(tmp_path, capsys):
    d = tmp_path / "d"
    assert main(["dataset", "--per-class", "20", "--set", "random_programs=20", "--seed", "7", "--out", str(d)]) == 0
    assert "train = 288" in (d / "manifest.txt").read_text()
    m = tmp_path / "m.npz"
    assert main(["train", str(d / "train.jsonl"), "--out", str(m), "--hash-dim", "4096"]) == 0
    assert main(["eval", str(d / "test.jsonl"), "--model", str(m), "--csv", str(tmp_path / "r.csv")]) == 0
    assert "Macro avg" in capsys.readouterr().out
    assert (tmp_path / "r.csv").read_text().startswith("head,class")


def test_bench_table_cli(tmp_path, capsys):
    assert main(["bench-table", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "bench_table.csv").read_text().splitlines()
    assert len(rows) == 1 + 12


def test_usage_errors(tmp_path, capsys):
    assert main(["pipeline", "--kind", "--out", str(tmp_path / "x")]) == 2
    assert not (tmp_path / "x").exists()
    assert main(["virtualize", "no_such_program"]) == 2
    cfg = tmp_path / "c.txt"
    cfg.write_text("bogus_key = 1\n")
    assert main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "y")]) == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_stage_failure_exit_code(tmp_path, capsys):
    assert main(["label", str(tmp_path / "missing.cfg")]) == 1


def test_config_parsing():
    cfg = parse_config("# comment\nkinds = switch, direct\nopt_levels = 0\nper_class = 50\ntokenizer = normalized\ninclude_builtins = no\n")
    assert cfg.kinds == (DispatchKind.SWITCH, DispatchKind.DIRECT)
    assert cfg.opt_levels == (0,) and cfg.per_class == 50 and not cfg.include_builtins
    assert parse_config(format_config(cfg)) == cfg
    assert parse_config(format_config(PipelineConfig())) == PipelineConfig()
    for bad in ("kinds =", "opt_levels = 2", "per_class = many", "nonsense", "budget = 4"):
        with pytest.raises(UsageError):
            parse_config(bad)


def test_bench_table_shape():
    table = bench_table()
    assert len(table.rows()) == 12
    assert table.pattern_holds()
    for (_p, role, opt, _k), ok in table.cells.items():
        assert ok == (opt == 0 or role in (Role.DISPATCH_START, Role.HANDLER))
    assert {r for _, r, _ in table.rows()} == set(CORE_ROLES)
