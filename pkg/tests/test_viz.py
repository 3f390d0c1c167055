from __future__ import annotations

import pytest
from hypothesis import given, settings

from conftest import cfgs
from vmlab.cfg import build_cfg
from vmlab.errors import IncompleteRoleMap
from vmlab.ir import builtin
from vmlab.labeler import label_structures
from vmlab.roles import ROLES, DispatchKind, Role
from vmlab.virtualizer import virtualize
from vmlab.viz import DEFAULT_SCHEME, ColorScheme, check_dot, count_statements, emit_dot, node_label, roles_from_truth


def test_default_scheme():
    assert DEFAULT_SCHEME[Role.DISPATCH_START] == "red"
    assert DEFAULT_SCHEME[Role.NON_VM] == "gray"
    assert DEFAULT_SCHEME.is_injective()
    with pytest.raises(ValueError):
        ColorScheme({Role.VM: "blue"})


def test_empty_cfg():
    text = emit_dot(build_cfg("e", []), {})
    assert "digraph G { }" in text.splitlines()
    assert text.startswith("//")
    check_dot(text)


def test_missing_role():
    g = build_cfg("g", [(0, [], [1]), (1, [], [])])
    with pytest.raises(IncompleteRoleMap):
        emit_dot(g, {0: Role.VM})


@settings(max_examples=60, deadline=None)
@given(cfgs(max_blocks=30))
def test_counts_and_syntax(g):
    roles = label_structures(g)
    text = emit_dot(g, roles)
    check_dot(text)
    assert count_statements(text) == (len(g.blocks), len(g.edges()))
    assert text.count("fillcolor=") == len(g.blocks)
    assert emit_dot(g, roles) == text


def test_switch_factorial_one_red_node():
    art = virtualize(builtin("factorial"), DispatchKind.SWITCH)
    roles, mixed = roles_from_truth(art)
    assert not mixed
    text = emit_dot(art.cfg, roles)
    assert text.count("fillcolor=red") == 1
    red = next(ln for ln in text.splitlines() if "fillcolor=red" in ln).split()[0]
    out_edges = [ln for ln in text.splitlines() if ln.strip().startswith(f"{red} ->")]
    assert len(out_edges) == len(art.cfg.successors(label_dispatcher(art)))


def label_dispatcher(art):
    pred = label_structures(art.cfg)
    return next(b for b, r in pred.items() if r is Role.DISPATCH_START)


def test_mixed_blocks_are_dashed():
    art = virtualize(builtin("factorial"), DispatchKind.SWITCH, 1)
    roles, mixed = roles_from_truth(art)
    assert mixed
    text = emit_dot(art.cfg, roles, mixed=mixed)
    assert text.count('"filled,dashed"') == len(mixed)
    check_dot(text)


def test_label_truncation_and_escaping():
    label = node_label(3, ['mov a, "x"', "b\\c", "c", "d"])
    assert label.count("\\l") == 5
    assert '\\"x\\"' in label and "..." in label
    assert "..." not in node_label(3, ["a", "b", "c", "d"], full=True)


@pytest.mark.parametrize(
    "bad",
    [
        "graph G { a -- b }",
        "digraph G { a -> }",
        "digraph G { a [x=] }",
        "digraph G { a -> b",
        'digraph G { a [label="unterminated] }',
        "digraph G { } extra",
    ],
)
def test_checker_rejects(bad):
    with pytest.raises(ValueError):
        check_dot(bad)


def test_checker_accepts_common_forms():
    check_dot('strict digraph "x" { graph [rankdir=LR]; a -> b -> c [color=red, style="dashed"]; d; x = y }')


def test_every_role_has_a_color():
    assert all(DEFAULT_SCHEME[r] for r in ROLES)
