from __future__ import annotations

import random

import pytest
from hypothesis import given, settings

from conftest import cfgs, random_cfg
from vmlab.cfg import (
    build_cfg,
    dead_blocks,
    emit_cfg,
    is_trivial_scc,
    out_degree,
    parse_cfg,
    parse_document,
    predecessors,
    scc_of,
)
from vmlab.errors import BlockNotFound, ParseError, ValidationError
from vmlab.ir import builtin
from vmlab.roles import DispatchKind
from vmlab.virtualizer import emit_artifact, virtualize

CHAIN = build_cfg("chain", [(0, ["a"], [1]), (1, ["b"], [2]), (2, ["ret"], [])])
CYCLE = build_cfg("cycle", [(0, [], [1]), (1, [], [0])])


def closure(cfg):
    """Reachability matrix by Warshall's algorithm (reflexive)."""
    ids = cfg.ids
    pos = {b: i for i, b in enumerate(ids)}
    n = len(ids)
    r = [[i == j for j in range(n)] for i in range(n)]
    for b in cfg.blocks:
        for s in b.succs:
            r[pos[b.id]][pos[s]] = True
    for k in range(n):
        for i in range(n):
            if r[i][k]:
                for j in range(n):
                    if r[k][j]:
                        r[i][j] = True
    return ids, pos, r


def test_out_degree_basic():
    g = build_cfg("g", [(0, [], [2, 3, 4]), (2, [], []), (3, [], []), (4, [], [])])
    assert out_degree(g, 0) == 3
    assert out_degree(g, 4) == 0
    with pytest.raises(BlockNotFound):
        out_degree(g, 99)


def test_predecessors_chain():
    assert predecessors(CHAIN, 0) == frozenset()
    assert predecessors(CHAIN, 1) == {0}
    with pytest.raises(BlockNotFound):
        predecessors(CHAIN, 7)


def test_scc_small_cases():
    assert scc_of(CHAIN, 1) == {1}
    assert is_trivial_scc(CHAIN, scc_of(CHAIN, 1))
    assert scc_of(CYCLE, 0) == {0, 1}
    assert not is_trivial_scc(CYCLE, scc_of(CYCLE, 0))
    loop = build_cfg("self", [(0, [], [0])])
    assert not is_trivial_scc(loop, scc_of(loop, 0))
    with pytest.raises(BlockNotFound):
        scc_of(CHAIN, 5)


def test_parallel_edges_collapse():
    g = build_cfg("g", [(0, [], [1, 1, 1]), (1, [], [])])
    assert g.successors(0) == (1,)


def test_construction_errors():
    with pytest.raises(ValidationError):
        build_cfg("g", [(0, [], [5])])
    with pytest.raises(ValidationError):
        build_cfg("g", [(0, [], []), (0, [], [])])
    with pytest.raises(ValidationError):
        build_cfg("g", [(0, [], [])], entry=3)


def test_dead_blocks_flagged_not_removed():
    g = build_cfg("g", [(0, [], [1]), (1, [], []), (2, [], [1])])
    assert dead_blocks(g) == {2}
    assert 2 in g


def test_switch_dispatcher_degree_matches_edge_lines():
    art = virtualize(builtin("factorial"), DispatchKind.SWITCH)
    text = emit_artifact(art)
    edges = [ln.split() for ln in text.splitlines() if ln.startswith("EDGE ")]
    from_disp = sum(1 for _, src, _dst in edges if int(src) == art.dispatcher)
    assert out_degree(art.cfg, art.dispatcher) == from_disp == art.bytecode.handler_count + 1


def test_fibonacci_dispatcher_predecessors_brute_force():
    art = virtualize(builtin("fibonacci"), DispatchKind.SWITCH)
    brute = {b.id for b in art.cfg.blocks if art.dispatcher in b.succs}
    assert predecessors(art.cfg, art.dispatcher) == brute
    starts = {b for b in brute if art.block_role(b).value == "VM-START"}
    assert len(starts) == 1


def test_switch_dispatcher_scc_is_reachability_intersection():
    art = virtualize(builtin("factorial"), DispatchKind.SWITCH)
    ids, pos, r = closure(art.cfg)
    d = pos[art.dispatcher]
    expected = {ids[x] for x in range(len(ids)) if r[d][x] and r[x][d]}
    assert scc_of(art.cfg, art.dispatcher) == expected
    assert set(art.handlers) - {art.cfg.blocks[-1].id} <= expected | set(art.cfg.successors(art.dispatcher))


@settings(max_examples=60, deadline=None)
@given(cfgs(max_blocks=50))
def test_scc_matches_closure_oracle(g):
    ids, pos, r = closure(g)
    for b in ids:
        i = pos[b]
        expected = {ids[j] for j in range(len(ids)) if r[i][j] and r[j][i]}
        assert scc_of(g, b) == expected


@settings(max_examples=100, deadline=None)
@given(cfgs(max_blocks=50))
def test_emit_parse_round_trip(g):
    text = emit_cfg(g)
    back = parse_cfg(text)
    assert back == g
    assert emit_cfg(back) == text
    assert sum(out_degree(g, b) for b in g.ids) == text.count("\nEDGE ")


def test_round_trip_fifty_block_graph():
    g = random_cfg(random.Random(50), 50, max_out=5)
    assert parse_cfg(emit_cfg(g)) == g


def test_round_trip_labeled_artifact():
    art = virtualize(builtin("bubble_sort"), DispatchKind.INDIRECT)
    doc = parse_document(emit_artifact(art))
    assert doc.cfg == art.cfg
    assert doc.meta["kind"] == "INDIRECT"


def test_empty_function_round_trip_byte_identical():
    g = build_cfg("empty", [(0, [], [])])
    text = emit_cfg(g)
    assert emit_cfg(parse_cfg(text)) == text
    assert text == "FUNC empty\nBLOCK 0\n"


def test_non_first_entry_round_trips():
    g = build_cfg("g", [(0, ["x"], []), (1, ["y"], [0])], entry=1)
    assert parse_cfg(emit_cfg(g)) == g


def test_mixed_labels_round_trip():
    g = build_cfg("g", [(0, ["a", "b", "c"], [])])
    labels = {0: (("NON-VM", 0, 1), ("VM-START", 1, 3))}
    doc = parse_document(emit_cfg(g, labels=labels))
    assert doc.labels == labels


@pytest.mark.parametrize(
    "text, exc, lineno",
    [
        ("FUNC f\nBLOCK 0\nEDGE 0 9\n", ValidationError, None),
        ("FUNC f\nBLOCK 0\nBLOCK x\n", ParseError, 3),
        ("BLOCK 0\n", ParseError, 1),
        ("FUNC f\nBLOCK 0\nBOGUS 1\n", ParseError, 3),
        ("FUNC f\nBLOCK 0\nEDGE 0\n", ParseError, 3),
        ("FUNC f\nBLOCK 0\nLABEL 0 NOPE\n", ParseError, 3),
        ("FUNC f\nBLOCK 0\nINS a\nLABEL 0 VM@0:2\n", ParseError, 4),
        ("FUNC f\nBLOCK 0\nINS a\nINS b\nLABEL 0 VM@1:2\n", ParseError, 5),
        ("FUNC f\nBLOCK 0\nLABEL 0 VM\nLABEL 0 VM\n", ParseError, 4),
        ("FUNC f\nBLOCK 0\nLABEL 3 VM\n", ValidationError, None),
    ],
)
def test_malformed_documents(text, exc, lineno):
    with pytest.raises(exc) as info:
        parse_cfg(text)
    if lineno is not None:
        assert info.value.lineno == lineno


def test_random_cfg_helper_is_deterministic():
    a = random_cfg(random.Random(5), 20)
    b = random_cfg(random.Random(5), 20)
    assert a == b
