"""Multi-task linear classifier over hashed token n-grams.

Two softmax heads (dispatch kind and block role) share one hashed feature
space and are trained jointly on the summed cross-entropy with per-example
AdaGrad updates. Everything is seeded; no ambient entropy.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import zipfile
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .errors import EmptyInput, ParseError
from .roles import KINDS, ROLES, DispatchKind, Role

MODEL_FORMAT = "vmlab-linear"
MODEL_VERSION = 1
_SEP = "\x1f"


@dataclass(frozen=True)
class FeatureConfig:
    orders: tuple[int, ...] = (1, 2)
    hash_dim: int = 1 << 18
    signed: bool = True

    def __post_init__(self) -> None:
        if self.hash_dim < 2 or self.hash_dim & (self.hash_dim - 1):
            raise ValueError(f"hash_dim must be a power of two, got {self.hash_dim}")
        if not self.orders or any(n < 1 for n in self.orders):
            raise ValueError(f"orders must be non-empty positive integers, got {self.orders}")

    def to_dict(self) -> dict:
        return {"orders": list(self.orders), "hash_dim": self.hash_dim, "signed": self.signed}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(tuple(d["orders"]), int(d["hash_dim"]), bool(d["signed"]))


@dataclass(frozen=True)
class Hyper:
    epochs: int = 5
    lr: float = 0.1
    seed: int = 42
    eps: float = 1e-8

    def __post_init__(self) -> None:
        if self.epochs < 0 or self.lr <= 0:
            raise ValueError("epochs must be >= 0 and lr > 0")


@lru_cache(maxsize=1 << 20)
def _hash64(key: str) -> int:
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "little")


def ngram_keys(tokens: Sequence[str], orders: Sequence[int]) -> list[str]:
    keys = []
    for n in orders:
        for i in range(len(tokens) - n + 1):
            keys.append(f"{n}{_SEP}" + _SEP.join(tokens[i : i + n]))
    return keys


def featurize(tokens: Sequence[str], config: FeatureConfig = FeatureConfig()) -> dict[int, float]:
    """Sparse hashed n-gram counts as ``{bucket: value}``; signed hashing flips the sign by the hash's top bit."""
    mask = config.hash_dim - 1
    vec: dict[int, float] = {}
    for key in ngram_keys(tokens, config.orders):
        h = _hash64(key)
        sign = -1.0 if config.signed and h >> 63 else 1.0
        bucket = h & mask
        vec[bucket] = vec.get(bucket, 0.0) + sign
    return {k: v for k, v in vec.items() if v != 0.0}


@dataclass
class FeatureMatrix:
    """CSR rows of featurized token sequences."""

    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.indptr) - 1

    def dense(self, dim: int) -> np.ndarray:
        out = np.zeros((self.n_rows, dim))
        for i in range(self.n_rows):
            lo, hi = self.indptr[i], self.indptr[i + 1]
            out[i, self.indices[lo:hi]] = self.values[lo:hi]
        return out


def feature_matrix(token_lists: Sequence[Sequence[str]], config: FeatureConfig) -> FeatureMatrix:
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    for tokens in token_lists:
        vec = featurize(tokens, config)
        keys = sorted(vec)
        indices.extend(keys)
        values.extend(vec[k] for k in keys)
        indptr.append(len(indices))
    return FeatureMatrix(np.asarray(indptr, np.int64), np.asarray(indices, np.int64), np.asarray(values, np.float64))


# --- model ------------------------------------------------------------------------------


@dataclass
class Model:
    main_W: np.ndarray  # (3, hash_dim)
    main_b: np.ndarray
    sub_W: np.ndarray  # (6, hash_dim)
    sub_b: np.ndarray
    config: FeatureConfig = field(default_factory=FeatureConfig)
    train_meta: dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, config: FeatureConfig, train_meta: dict | None = None) -> "Model":
        d = config.hash_dim
        return cls(np.zeros((len(KINDS), d)), np.zeros(len(KINDS)), np.zeros((len(ROLES), d)), np.zeros(len(ROLES)), config, dict(train_meta or {}))

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in (self.main_W, self.main_b, self.sub_W, self.sub_b))

    def params(self) -> dict[str, np.ndarray]:
        return {"main_W": self.main_W, "main_b": self.main_b, "sub_W": self.sub_W, "sub_b": self.sub_b}


def _labels(records) -> tuple[np.ndarray, np.ndarray]:
    main = np.array([KINDS.index(DispatchKind(r.main_label)) for r in records], dtype=np.int64)
    sub = np.array([ROLES.index(Role(r.sub_label)) for r in records], dtype=np.int64)
    return main, sub


def epoch_orders(n: int, epochs: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [rng.permutation(n).astype(np.int64) for _ in range(epochs)]


def train(records, config: FeatureConfig = FeatureConfig(), hyper: Hyper = Hyper()) -> Model:
    """Fit both heads. Records are put in canonical id order first, so input order does not matter."""
    if not records:
        raise EmptyInput("no training records")
    ordered = sorted(records, key=lambda r: r.id)
    X = feature_matrix([r.tokens for r in ordered], config)
    y_main, y_sub = _labels(ordered)
    model = Model.zeros(config, {"seed": hyper.seed, "epochs": hyper.epochs, "lr": hyper.lr, "eps": hyper.eps, "n_train": len(ordered)})
    Gm, Gbm = np.zeros_like(model.main_W), np.zeros_like(model.main_b)
    Gs, Gbs = np.zeros_like(model.sub_W), np.zeros_like(model.sub_b)
    losses = []
    for order in epoch_orders(len(ordered), hyper.epochs, hyper.seed):
        total = _kernels.adagrad_epoch(
            order, X.indptr, X.indices, X.values, y_main, y_sub,
            model.main_W, model.main_b, Gm, Gbm, model.sub_W, model.sub_b, Gs, Gbs,
            float(hyper.lr), float(hyper.eps),
        )
        losses.append(total / len(ordered))
    model.train_meta["epoch_loss"] = [round(x, 12) for x in losses]
    return model


def head_scores(model: Model, X: FeatureMatrix) -> tuple[np.ndarray, np.ndarray]:
    return (
        _kernels.scores(X.indptr, X.indices, X.values, model.main_W, model.main_b),
        _kernels.scores(X.indptr, X.indices, X.values, model.sub_W, model.sub_b),
    )


@dataclass(frozen=True)
class Prediction:
    main: DispatchKind
    sub: Role
    main_scores: tuple[float, ...]
    sub_scores: tuple[float, ...]

    @property
    def sub_margin(self) -> float:
        s = sorted(self.sub_scores, reverse=True)
        return s[0] - s[1]


def predict_many(model: Model, token_lists: Sequence[Sequence[str]]) -> list[Prediction]:
    X = feature_matrix(token_lists, model.config)
    sm, ss = head_scores(model, X)
    # np.argmax returns the first maximum, i.e. ties go to the earlier enum member
    return [
        Prediction(KINDS[int(np.argmax(a))], ROLES[int(np.argmax(b))], tuple(a.tolist()), tuple(b.tolist()))
        for a, b in zip(sm, ss)
    ]


def predict(model: Model, tokens: Sequence[str]) -> Prediction:
    return predict_many(model, [tokens])[0]


# --- loss and gradient (reference path, dense) ---------------------------------------------


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(model: Model, X: FeatureMatrix, y_main: np.ndarray, y_sub: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
    """Mean summed cross-entropy of both heads and its analytic gradient. Dense; meant for small ``hash_dim``."""
    D = X.dense(model.config.hash_dim)
    n = D.shape[0]
    loss = 0.0
    grads = {}
    for name, y in (("main", y_main), ("sub", y_sub)):
        W, b = getattr(model, f"{name}_W"), getattr(model, f"{name}_b")
        P = _softmax(D @ W.T + b)
        loss -= float(np.log(P[np.arange(n), y]).sum()) / n
        P[np.arange(n), y] -= 1.0
        grads[f"{name}_W"] = P.T @ D / n
        grads[f"{name}_b"] = P.sum(axis=0) / n
    return loss, grads


# --- evaluation -------------------------------------------------------------------------


def f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass(frozen=True)
class ClassRow:
    label: str
    precision: float
    recall: float
    f1: float
    support: int
    precision_undefined: bool = False


@dataclass(frozen=True)
class EvalReport:
    rows: tuple[ClassRow, ...]
    main_rows: tuple[ClassRow, ...]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    main_accuracy: float
    sub_accuracy: float
    n: int
    sub_confusion: tuple[tuple[int, ...], ...]
    main_confusion: tuple[tuple[int, ...], ...]

    @property
    def undefined(self) -> tuple[str, ...]:
        return tuple(r.label for r in self.rows if r.precision_undefined)

    def row(self, label) -> ClassRow:
        key = getattr(label, "value", label)
        for r in self.rows + self.main_rows:
            if r.label == key:
                return r
        raise KeyError(key)

    def to_dict(self) -> dict:
        def rows(rs):
            return [{"class": r.label, "precision": r.precision, "recall": r.recall, "f1": r.f1, "support": r.support, "precision_undefined": r.precision_undefined} for r in rs]

        return {
            "n": self.n,
            "sub_rows": rows(self.rows),
            "main_rows": rows(self.main_rows),
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "main_accuracy": self.main_accuracy,
            "sub_accuracy": self.sub_accuracy,
            "sub_confusion": [list(r) for r in self.sub_confusion],
            "main_confusion": [list(r) for r in self.main_confusion],
        }


def confusion(y_true: Sequence[int], y_pred: Sequence[int], k: int) -> np.ndarray:
    m = np.zeros((k, k), dtype=np.int64)
    np.add.at(m, (np.asarray(y_true, np.int64), np.asarray(y_pred, np.int64)), 1)
    return m


def class_rows(cm: np.ndarray, labels: Sequence[str]) -> tuple[ClassRow, ...]:
    rows = []
    for i, label in enumerate(labels):
        tp = int(cm[i, i])
        predicted, support = int(cm[:, i].sum()), int(cm[i, :].sum())
        p = tp / predicted if predicted else 0.0
        r = tp / support if support else 0.0
        rows.append(ClassRow(label, p, r, f1(p, r), support, predicted == 0))
    return tuple(rows)


def report_from_labels(main_true, main_pred, sub_true, sub_pred) -> EvalReport:
    """Build a report from index labels (positions in KINDS and ROLES)."""
    n = len(sub_true)
    if n == 0:
        raise EmptyInput("no records to evaluate")
    cm_sub = confusion(sub_true, sub_pred, len(ROLES))
    cm_main = confusion(main_true, main_pred, len(KINDS))
    rows = class_rows(cm_sub, [r.value for r in ROLES])
    k = len(rows)
    return EvalReport(
        rows=rows,
        main_rows=class_rows(cm_main, [m.value for m in KINDS]),
        macro_precision=sum(r.precision for r in rows) / k,
        macro_recall=sum(r.recall for r in rows) / k,
        macro_f1=sum(r.f1 for r in rows) / k,
        main_accuracy=float(np.trace(cm_main)) / n,
        sub_accuracy=float(np.trace(cm_sub)) / n,
        n=n,
        sub_confusion=tuple(tuple(int(x) for x in r) for r in cm_sub),
        main_confusion=tuple(tuple(int(x) for x in r) for r in cm_main),
    )


def evaluate(model: Model, records) -> EvalReport:
    if not records:
        raise EmptyInput("no records to evaluate")
    preds = predict_many(model, [r.tokens for r in records])
    main_true, sub_true = _labels(records)
    main_pred = [KINDS.index(p.main) for p in preds]
    sub_pred = [ROLES.index(p.sub) for p in preds]
    return report_from_labels(main_true, main_pred, sub_true, sub_pred)


def format_report(report: EvalReport) -> str:
    """Aligned per-class table (precision, recall, F1, support) with macro averages."""
    w = max(len(r.label) for r in report.rows + report.main_rows) + 2
    head = f"{'':<{w}}{'precision':>10}{'recall':>10}{'f1-score':>10}{'support':>10}"
    lines = [head]
    for r in report.rows:
        flag = " *" if r.precision_undefined else ""
        lines.append(f"{r.label:<{w}}{r.precision:>10.4f}{r.recall:>10.4f}{r.f1:>10.4f}{r.support:>10d}{flag}")
    lines.append("")
    lines.append(f"{'Macro avg':<{w}}{report.macro_precision:>10.4f}{report.macro_recall:>10.4f}{report.macro_f1:>10.4f}{report.n:>10d}")
    lines.append(f"{'sub accuracy':<{w}}{report.sub_accuracy:>10.4f}")
    lines.append(f"{'main accuracy':<{w}}{report.main_accuracy:>10.4f}")
    lines.append("")
    lines.append(head)
    for r in report.main_rows:
        lines.append(f"{r.label:<{w}}{r.precision:>10.4f}{r.recall:>10.4f}{r.f1:>10.4f}{r.support:>10d}")
    if report.undefined:
        lines.append("* precision undefined (no predictions); reported as 0")
    return "\n".join(lines) + "\n"


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["head", "class", "precision", "recall", "f1", "support", "precision_undefined"])
    for head, rows in (("sub", report.rows), ("main", report.main_rows)):
        for r in rows:
            wr.writerow([head, r.label, f"{r.precision:.6f}", f"{r.recall:.6f}", f"{r.f1:.6f}", r.support, int(r.precision_undefined)])
    wr.writerow(["sub", "macro", f"{report.macro_precision:.6f}", f"{report.macro_recall:.6f}", f"{report.macro_f1:.6f}", report.n, 0])
    return buf.getvalue()


# --- persistence ------------------------------------------------------------------------

_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_model(model: Model, path: str | Path) -> None:
    """Zip of ``.npy`` arrays plus a JSON header; fixed timestamps keep the bytes reproducible."""
    header = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "config": model.config.to_dict(), "train_meta": model.train_meta}
    with zipfile.ZipFile(path, "w") as zf:
        def put(name: str, data: bytes) -> None:
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_DEFLATED
            info.external_attr = 0o644 << 16
            zf.writestr(info, data)

        put("header.json", json.dumps(header, sort_keys=True).encode())
        for name, arr in model.params().items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr, dtype=np.float64), allow_pickle=False)
            put(f"{name}.npy", buf.getvalue())


def load_model(path: str | Path) -> Model:
    try:
        with zipfile.ZipFile(path) as zf:
            header = json.loads(zf.read("header.json"))
            if header.get("format") != MODEL_FORMAT or header.get("version") != MODEL_VERSION:
                raise ParseError(f"unsupported model format {header.get('format')!r} v{header.get('version')}")
            arrays = {}
            for name in ("main_W", "main_b", "sub_W", "sub_b"):
                arrays[name] = np.lib.format.read_array(io.BytesIO(zf.read(f"{name}.npy")), allow_pickle=False)
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as exc:
        raise ParseError(f"not a model file: {exc}") from None
    config = FeatureConfig.from_dict(header["config"])
    model = Model(config=config, train_meta=header["train_meta"], **arrays)
    if model.main_W.shape != (len(KINDS), config.hash_dim) or model.sub_W.shape != (len(ROLES), config.hash_dim):
        raise ParseError("weight shapes do not match the feature config")
    return model
