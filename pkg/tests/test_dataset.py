from __future__ import annotations

import json
import logging
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmlab.dataset import (
    CorpusSpec,
    DatasetRecord,
    SplitSpec,
    build_corpus,
    build_corpus_report,
    cell_counts,
    corpus_artifacts,
    largest_remainder,
    make_record,
    parse_record,
    read_records,
    split,
    validation_split,
    write_records,
)
from vmlab.errors import EmptyInput, ParseError
from vmlab.roles import KINDS, ROLES

SMALL = CorpusSpec(random_programs=60)


@pytest.fixture(scope="module")
def small_artifacts():
    return corpus_artifacts(SMALL)


def records_strategy(max_size=40):
    rec = st.builds(
        make_record,
        st.lists(st.text(min_size=1, max_size=8), min_size=1, max_size=12),
        st.sampled_from(KINDS),
        st.sampled_from(ROLES),
        st.fixed_dictionaries({"program": st.text(max_size=10), "opt": st.sampled_from([0, 1]), "seed": st.integers(0, 9), "chunk": st.integers(0, 3)}),
    )
    return st.lists(rec, max_size=max_size)


def test_corpus_is_balanced(small_artifacts):
    recs = build_corpus(small_artifacts, 100)
    assert len(recs) == 1800
    assert set(cell_counts(recs).values()) == {100}
    assert len({r.id for r in recs}) == len(recs)


def test_shortfall_reported(small_artifacts, caplog):
    with caplog.at_level(logging.WARNING):
        build = build_corpus_report(small_artifacts, 10_000)
    assert build.shortfall
    for cell, short in build.shortfall.items():
        assert cell_counts(build.records)[cell] == build.available[cell] == 10_000 - short
    assert "short" in caplog.text


def test_same_seed_same_ids(small_artifacts):
    a = [r.id for r in build_corpus(small_artifacts, 50, seed=3)]
    b = [r.id for r in build_corpus(small_artifacts, 50, seed=3)]
    c = [r.id for r in build_corpus(small_artifacts, 50, seed=4)]
    assert a == b != c


def test_empty_artifacts():
    with pytest.raises(EmptyInput):
        build_corpus([], 10)


def test_split_single_cell():
    recs = [make_record([f"t{i}"], KINDS[0], ROLES[0], {}) for i in range(10)]
    tr, te = split(recs)
    assert (len(tr), len(te)) == (8, 2)


def test_split_balanced_corpus(small_artifacts):
    recs = build_corpus(small_artifacts, 100)
    tr, te = split(recs)
    assert (len(tr), len(te)) == (1440, 360)
    assert set(cell_counts(tr).values()) == {80}
    assert set(cell_counts(te).values()) == {20}


@settings(max_examples=50, deadline=None)
@given(records_strategy(), st.floats(0.05, 0.95), st.integers(0, 100))
def test_split_is_a_stratified_partition(recs, frac, seed):
    if not recs:
        with pytest.raises(EmptyInput):
            split(recs)
        return
    tr, te = split(recs, SplitSpec(frac, 1 - frac, seed))
    assert Counter(r.id for r in tr + te) == Counter(r.id for r in recs)
    full, train_counts = cell_counts(recs), cell_counts(tr)
    for cell, n in full.items():
        assert abs(train_counts[cell] - frac * n) < 1 + 1e-9


def test_split_ignores_input_order(small_artifacts):
    recs = build_corpus(small_artifacts, 20)
    assert split(recs) == split(list(reversed(recs)))


def test_split_spec_validation():
    with pytest.raises(ValueError):
        SplitSpec(0.7, 0.2)


@given(st.integers(0, 10_000), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5))
def test_largest_remainder_sums(n, weights):
    total = sum(weights)
    if total == 0:
        return
    fracs = [w / total for w in weights]
    counts = largest_remainder(n, fracs)
    assert sum(counts) == n
    assert all(abs(c - n * f) < 1 + 1e-9 for c, f in zip(counts, fracs))


def test_validation_split(small_artifacts):
    tr, _ = split(build_corpus(small_artifacts, 50))
    inner, val = validation_split(tr, 0.25)
    assert len(val) == 18 * 10 and len(inner) == 18 * 30


def test_empty_round_trip(tmp_path):
    p = tmp_path / "r.jsonl"
    write_records([], p)
    assert p.read_text() == ""
    assert read_records(p) == []


@settings(max_examples=10, deadline=None)
@given(records_strategy(max_size=100))
def test_record_round_trip(tmp_path_factory, recs):
    p = tmp_path_factory.mktemp("rt") / "r.jsonl"
    write_records(recs, p)
    assert read_records(p) == recs


def test_thousand_corpus_records_round_trip(small_artifacts, tmp_path):
    recs = build_corpus(small_artifacts, 56)[:1000]
    assert len(recs) == 1000
    p = tmp_path / "r.jsonl"
    write_records(recs, p)
    assert read_records(p) == recs


def test_schema_enforced():
    rec = make_record(["a"], KINDS[0], ROLES[0], {}).to_json()
    assert set(rec) == {"id", "main_label", "sub_label", "tokens", "meta"}
    missing = dict(rec)
    del missing["sub_label"]
    with pytest.raises(ParseError):
        parse_record(json.dumps(missing))
    with pytest.raises(ParseError):
        parse_record(json.dumps({**rec, "sub_label": "BOGUS"}))
    with pytest.raises(ParseError):
        parse_record(json.dumps({**rec, "tokens": []}))
    with pytest.raises(ParseError):
        parse_record("{not json")


def test_parse_error_has_line_number(tmp_path):
    p = tmp_path / "r.jsonl"
    good = json.dumps(make_record(["a"], KINDS[0], ROLES[0], {}).to_json())
    p.write_text(good + "\n" + good + "\n{}\n")
    with pytest.raises(ParseError) as info:
        read_records(p)
    assert info.value.lineno == 3


def test_record_id_is_content_hash():
    a = make_record(["a", "b"], KINDS[0], ROLES[1], {"x": 1})
    b = make_record(["a", "b"], KINDS[0], ROLES[1], {"x": 1})
    c = make_record(["a", "b"], KINDS[0], ROLES[2], {"x": 1})
    assert a.id == b.id != c.id
    assert isinstance(a, DatasetRecord)
