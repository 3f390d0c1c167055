from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmlab.classifier import (
    FeatureConfig,
    Hyper,
    Model,
    _hash64,
    evaluate,
    f1,
    feature_matrix,
    featurize,
    format_report,
    load_model,
    loss_and_grad,
    ngram_keys,
    predict,
    predict_many,
    report_csv,
    report_from_labels,
    save_model,
    train,
)
from vmlab.dataset import CorpusSpec, build_corpus, corpus_artifacts, make_record, split
from vmlab.errors import EmptyInput, ParseError
from vmlab.roles import KINDS, ROLES, DispatchKind, Role

SMALL = FeatureConfig(hash_dim=1 << 10)


def toy_records(n=60, seed=0):
    """Each class gets its own vocabulary plus shared noise tokens."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        k, r = KINDS[i % 3], ROLES[i % 6]
        toks = [f"k{k.value}", f"r{r.value}"] + [f"n{int(x)}" for x in rng.integers(0, 5, size=3)]
        out.append(make_record(toks, k, r, {"i": i}))
    return out


# --- features -----------------------------------------------------------------------------


def test_feature_config_validation():
    with pytest.raises(ValueError):
        FeatureConfig(hash_dim=1000)
    with pytest.raises(ValueError):
        FeatureConfig(orders=())


def test_featurize_trivial():
    assert featurize([]) == {}
    vec = featurize(["a", "b"])
    assert len(vec) == 3
    assert sum(abs(v) for v in vec.values()) == 3
    assert ngram_keys(["a", "b"], (1, 2)) == ["1\x1fa", "1\x1fb", "2\x1fa\x1fb"]


def test_featurize_counts_repeats():
    vec = featurize(["x", "x", "x"], FeatureConfig(signed=False))
    assert sorted(vec.values()) == [2.0, 3.0]


def test_hash_is_stable():
    # frozen digests: blake2b is platform independent
    assert _hash64("1\x1fmov") == 0x806F1E008E2175B1
    assert _hash64("2\x1fload\x1ft0") == 0x4DDDB76FBDF2BB2F


def test_collision_rate_near_birthday_bound():
    m, n = 1 << 18, 100_000
    expected = n - m * (1 - (1 - 1 / m) ** n)  # about 16863
    buckets = {_hash64(f"1\x1fng{i}") & (m - 1) for i in range(n)}
    collisions = n - len(buckets)
    assert collisions == 16911  # frozen empirical count
    assert abs(collisions - expected) / expected < 0.02


# --- gradients and training -------------------------------------------------------------------


def test_gradient_check_central_differences():
    cfg = FeatureConfig(hash_dim=64)
    recs = toy_records(10)
    X = feature_matrix([r.tokens for r in recs], cfg)
    ym = np.array([KINDS.index(r.main_label) for r in recs])
    ys = np.array([ROLES.index(r.sub_label) for r in recs])
    rng = np.random.default_rng(1)
    model = Model.zeros(cfg)
    for arr in model.params().values():
        arr[...] = rng.normal(scale=0.5, size=arr.shape)
    _, grads = loss_and_grad(model, X, ym, ys)
    h = 1e-5
    for name, arr in model.params().items():
        fd = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up, _ = loss_and_grad(model, X, ym, ys)
            arr[idx] = old - h
            down, _ = loss_and_grad(model, X, ym, ys)
            arr[idx] = old
            fd[idx] = (up - down) / (2 * h)
        rel = np.linalg.norm(fd - grads[name]) / max(np.linalg.norm(fd), 1e-12)
        assert rel < 1e-4, name


def test_single_adagrad_step_matches_reference():
    cfg = FeatureConfig(hash_dim=32)
    rec = toy_records(1)
    model = train(rec, cfg, Hyper(epochs=1, lr=0.5))
    X = feature_matrix([rec[0].tokens], cfg)
    _, g = loss_and_grad(Model.zeros(cfg), X, np.array([0]), np.array([0]))
    for name, grad in g.items():
        expected = -0.5 * grad / (np.abs(grad) + 1e-8)
        assert np.allclose(model.params()[name], expected, atol=1e-12)


def test_training_is_deterministic():
    recs = toy_records(80)
    a = train(recs, SMALL)
    b = train(recs, SMALL)
    for name in a.params():
        assert np.array_equal(a.params()[name], b.params()[name])
    assert a.train_meta == b.train_meta


def test_input_order_does_not_matter():
    recs = toy_records(80)
    a = train(recs, SMALL)
    b = train(list(reversed(recs)), SMALL)
    assert all(np.array_equal(a.params()[k], b.params()[k]) for k in a.params())


def test_seed_changes_model():
    recs = toy_records(80)
    a = train(recs, SMALL, Hyper(seed=1))
    b = train(recs, SMALL, Hyper(seed=2))
    assert not np.array_equal(a.sub_W, b.sub_W)


def test_single_class_degenerate():
    recs = [make_record([f"t{i}", "x"], DispatchKind.DIRECT, Role.VM, {}) for i in range(20)]
    model = train(recs, SMALL)
    assert evaluate(model, recs).sub_accuracy == 1.0
    assert predict(model, recs[0].tokens).sub is Role.VM
    assert predict(model, ["never", "seen"]).main is DispatchKind.DIRECT


def test_empty_tokens_use_biases():
    model = train(toy_records(60), SMALL)
    p = predict(model, [])
    assert p.main is KINDS[int(np.argmax(model.main_b))]
    assert p.sub is ROLES[int(np.argmax(model.sub_b))]
    assert np.allclose(p.sub_scores, model.sub_b)


def test_ties_go_to_first_enum_member():
    p = predict(Model.zeros(SMALL), ["a"])
    assert p.main is KINDS[0] and p.sub is ROLES[0]


def test_train_empty():
    with pytest.raises(EmptyInput):
        train([], SMALL)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 1000), st.integers(6, 60))
def test_fit_beats_majority_baseline(seed, n):
    recs = toy_records(n, seed)
    report = evaluate(train(recs, SMALL), recs)
    counts = np.bincount([ROLES.index(r.sub_label) for r in recs], minlength=6)
    assert report.sub_accuracy >= counts.max() / len(recs)
    assert report.sub_accuracy == 1.0


def test_weights_finite_and_shared_space():
    model = train(toy_records(60), SMALL)
    assert model.is_finite()
    assert model.main_W.shape == (3, SMALL.hash_dim) and model.sub_W.shape == (6, SMALL.hash_dim)


# --- metrics --------------------------------------------------------------------------------


def test_f1_values():
    assert f1(0.9983, 0.9993) == pytest.approx(0.9988, abs=1e-4)
    assert f1(1, 1) == 1
    assert f1(0, 0) == 0


# hand-built confusion matrix over 30 records (rows: truth, cols: prediction, ROLES order)
SUB_CM = [
    [4, 1, 0, 0, 0, 0],
    [0, 5, 0, 0, 0, 0],
    [0, 2, 3, 0, 0, 0],
    [0, 0, 0, 5, 0, 0],
    [0, 0, 0, 0, 4, 2],
    [0, 0, 0, 0, 0, 4],
]
MAIN_CM = [[8, 2, 0], [0, 10, 0], [1, 0, 9]]
HAND_PRECISION = [1, Fraction(5, 8), 1, 1, 1, Fraction(2, 3)]
HAND_RECALL = [Fraction(4, 5), 1, Fraction(3, 5), 1, Fraction(2, 3), 1]
HAND_F1 = [Fraction(8, 9), Fraction(10, 13), Fraction(3, 4), 1, Fraction(4, 5), Fraction(4, 5)]
HAND_SUPPORT = [5, 5, 5, 5, 6, 4]


def _pairs(cm):
    return [(t, p) for t, row in enumerate(cm) for p, n in enumerate(row) for _ in range(n)]


def fixture_records():
    subs, mains = _pairs(SUB_CM), _pairs(MAIN_CM)
    assert len(subs) == len(mains) == 30
    out = []
    for i, ((st_, sp), (mt, mp)) in enumerate(zip(subs, mains)):
        out.append((make_record([f"pred:{sp}:{mp}"], KINDS[mt], ROLES[st_], {"i": i}), sp, mp))
    return out


def rigged_model():
    """A model whose prediction for token ``pred:s:m`` is exactly (KINDS[m], ROLES[s])."""
    cfg = FeatureConfig()
    model = Model.zeros(cfg)
    for s in range(6):
        for m in range(3):
            ((bucket, sign),) = featurize([f"pred:{s}:{m}"], cfg).items()
            model.sub_W[s, bucket] = sign
            model.main_W[m, bucket] = sign
    return model


def check_against_hand(report):
    for i, row in enumerate(report.rows):
        assert row.label == ROLES[i].value
        assert row.precision == pytest.approx(float(HAND_PRECISION[i]), abs=1e-15)
        assert row.recall == pytest.approx(float(HAND_RECALL[i]), abs=1e-15)
        assert row.f1 == pytest.approx(float(HAND_F1[i]), abs=1e-15)
        assert row.support == HAND_SUPPORT[i]
    assert report.macro_f1 == pytest.approx(float(sum(HAND_F1) / 6), abs=1e-15)
    assert report.macro_precision == pytest.approx(float(sum(HAND_PRECISION) / 6), abs=1e-15)
    assert report.macro_recall == pytest.approx(float(sum(HAND_RECALL) / 6), abs=1e-15)
    assert report.sub_accuracy == pytest.approx(25 / 30, abs=1e-15)
    assert report.main_accuracy == pytest.approx(27 / 30, abs=1e-15)
    assert [list(r) for r in report.sub_confusion] == SUB_CM
    assert [list(r) for r in report.main_confusion] == MAIN_CM
    assert sum(r.support for r in report.rows) == report.n == 30


def test_report_matches_hand_confusion_matrix():
    recs = fixture_records()
    rep = report_from_labels(
        [KINDS.index(r.main_label) for r, _, _ in recs],
        [mp for _, _, mp in recs],
        [ROLES.index(r.sub_label) for r, _, _ in recs],
        [sp for _, sp, _ in recs],
    )
    check_against_hand(rep)


def test_evaluate_matches_hand_confusion_matrix():
    recs = fixture_records()
    check_against_hand(evaluate(rigged_model(), [r for r, _, _ in recs]))


def test_undefined_precision_flagged():
    rep = report_from_labels([0, 0], [0, 0], [0, 1], [0, 0])
    row = rep.row(Role.HANDLER)
    assert row.precision == 0.0 and row.precision_undefined
    assert rep.undefined == tuple(r.value for r in ROLES[1:])
    assert np.isfinite(rep.macro_f1)


def test_perfect_predictions():
    rep = report_from_labels([0, 1, 2] * 2, [0, 1, 2] * 2, list(range(6)), list(range(6)))
    assert rep.macro_f1 == rep.main_accuracy == rep.sub_accuracy == 1.0


def test_unequal_support_is_reported():
    recs = fixture_records()
    rep = evaluate(rigged_model(), [r for r, _, _ in recs])
    assert rep.row(Role.VM_END).support == 6 and rep.row(Role.NON_VM).support == 4


def test_evaluate_empty():
    with pytest.raises(EmptyInput):
        evaluate(Model.zeros(SMALL), [])


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=60))
def test_report_properties(pairs):
    t, p = zip(*pairs)
    rep = report_from_labels([0] * len(t), [0] * len(t), t, p)
    assert rep.macro_f1 == pytest.approx(sum(r.f1 for r in rep.rows) / 6)
    assert sum(r.support for r in rep.rows) == len(pairs)
    for r in rep.rows:
        assert 0 <= r.precision <= 1 and 0 <= r.recall <= 1 and 0 <= r.f1 <= 1


def test_table_and_csv_layout():
    recs = fixture_records()
    rep = evaluate(rigged_model(), [r for r, _, _ in recs])
    text = format_report(rep)
    assert text.splitlines()[0].split() == ["precision", "recall", "f1-score", "support"]
    assert "Macro avg" in text and "VM-END" in text
    rows = report_csv(rep).splitlines()
    assert len(rows) == 1 + 6 + 3 + 1


# --- persistence ------------------------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    model = train(toy_records(60), SMALL)
    a, b = tmp_path / "a.npz", tmp_path / "b.npz"
    save_model(model, a)
    save_model(load_model(a), b)
    assert a.read_bytes() == b.read_bytes()
    back = load_model(a)
    assert back.config == model.config and back.train_meta == model.train_meta
    assert all(np.array_equal(back.params()[k], model.params()[k]) for k in model.params())


def test_load_rejects_garbage(tmp_path):
    p = tmp_path / "x.npz"
    p.write_bytes(b"not a zip")
    with pytest.raises(ParseError):
        load_model(p)


# --- desk-scale sanity ------------------------------------------------------------------------


@pytest.fixture(scope="module")
def small_desk():
    recs = build_corpus(corpus_artifacts(CorpusSpec(random_programs=60)), 100)
    tr, te = split(recs)
    return train(tr), te


def test_held_out_dispatch_start_margin(small_desk):
    model, te = small_desk
    rep = evaluate(model, te)
    ds = [r for r in te if r.sub_label is Role.DISPATCH_START]
    preds = predict_many(model, [r.tokens for r in ds])
    hits = [p for p in preds if p.sub is Role.DISPATCH_START]
    assert all(p.sub_margin > 0 for p in hits)
    assert len(hits) / len(ds) == pytest.approx(rep.row(Role.DISPATCH_START).recall)
    assert rep.macro_f1 > 0.9
