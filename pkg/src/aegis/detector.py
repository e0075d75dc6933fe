"""Labeling attack data and training the safe/unsafe state detector.

Labeling follows the attack semantics: every state of a safe rollout is a
safe row; for an unsafe perturbed rollout the perturbed state and all of its
successors are unsafe rows.  Duplicate (state, label) rows are removed by
bitwise equality.  The detector is either a random forest or a small dense
softmax classifier; both expose two scores summing to one, and the final
safe/unsafe decision is offset by an approximating constant ``C``:
state is safe iff score_safe > score_unsafe + C.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .forest import LabeledDataset, RandomForest, rf_predict_proba, rf_train
from .neuralctl.nets import Adam, DenseNet, backward, forward, init_dense

DETECTOR_KINDS = ("forest", "dense")


class DetectorError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Dataset construction
# ---------------------------------------------------------------------------

def build_dataset(records, safe_trajs=()) -> LabeledDataset:
    """Assemble labeled rows from attack records and known-safe trajectories."""
    rows = {}

    def add(state, label):
        key = (label, np.asarray(state, dtype=float).tobytes())
        if key not in rows:
            rows[key] = np.asarray(state, dtype=float)

    n_sources = 0
    for traj in safe_trajs:
        states = getattr(traj, "states", traj)
        for s in np.asarray(states, dtype=float):
            add(s, 0)
        n_sources += 1
    for rec in records:
        if rec.states is None:
            continue
        label = 1 if rec.unsafe else 0
        for s in rec.states:
            add(s, label)
        n_sources += 1
    if n_sources == 0 or not rows:
        raise DetectorError("no trajectories or records to label")
    features = np.stack([v for v in rows.values()])
    labels = np.array([k[0] for k in rows.keys()], dtype=int)
    return LabeledDataset(features, labels)


# ---------------------------------------------------------------------------
# Detector
# ---------------------------------------------------------------------------

@dataclass
class Detector:
    kind: str
    model: object  # RandomForest or DenseNet
    C: float = 0.0
    heldout_accuracy: Optional[float] = None
    hyper: dict = field(default_factory=dict)
    data_hash: str = ""

    def __post_init__(self):
        if self.kind not in DETECTOR_KINDS:
            raise DetectorError(f"unknown detector kind {self.kind!r}")


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def scores_batch(det: Detector, X) -> np.ndarray:
    """(n, 2) array of [score_safe, score_unsafe]."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if det.kind == "forest":
        return rf_predict_proba(det.model, X)
    return _softmax(forward(det.model, X))


def scores(det: Detector, s):
    p = scores_batch(det, np.asarray(s, dtype=float)[None, :])[0]
    return float(p[0]), float(p[1])


def classify(det: Detector, s) -> bool:
    """True means unsafe: the state fails the safe-score margin test."""
    safe, unsafe = scores(det, s)
    return not (safe > unsafe + det.C)


def classify_batch(det: Detector, X) -> np.ndarray:
    p = scores_batch(det, X)
    return ~(p[:, 0] > p[:, 1] + det.C)


def _dataset_hash(data: LabeledDataset) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data.features).tobytes())
    h.update(np.ascontiguousarray(data.labels).tobytes())
    return h.hexdigest()


def _stratified_split(labels: np.ndarray, holdout_fraction: float, rng):
    train_idx, test_idx = [], []
    for cls in (0, 1):
        idx = np.flatnonzero(labels == cls)
        idx = idx[rng.permutation(len(idx))]
        n_hold = max(1, int(round(holdout_fraction * len(idx)))) \
            if len(idx) > 1 else 0
        test_idx.append(idx[:n_hold])
        train_idx.append(idx[n_hold:])
    return np.concatenate(train_idx), np.concatenate(test_idx)


def train_detector(data: LabeledDataset, kind: str = "dense",
                   hyper: Optional[dict] = None, seed=0) -> Detector:
    """Train a detector and record its held-out accuracy (20% stratified)."""
    if kind not in DETECTOR_KINDS:
        raise DetectorError(f"unknown detector kind {kind!r}")
    n_safe, n_unsafe = data.class_counts()
    if n_safe == 0 or n_unsafe == 0:
        raise DetectorError("both labels must be present in training data")
    hyper = dict(hyper or {})
    rng = np.random.default_rng(seed)
    train_idx, test_idx = _stratified_split(data.labels, 0.2, rng)
    X_tr, y_tr = data.features[train_idx], data.labels[train_idx]
    X_te, y_te = data.features[test_idx], data.labels[test_idx]

    if kind == "forest":
        hyper.setdefault("n_trees", 100)
        hyper.setdefault("max_depth", 50)
        model = rf_train(LabeledDataset(X_tr, y_tr),
                         n_trees=hyper["n_trees"],
                         max_depth=hyper["max_depth"],
                         seed=seed, balanced=True)
    else:
        hyper.setdefault("hidden", (128, 128, 128))
        hyper.setdefault("lr", 1e-3)
        hyper.setdefault("batch_size", 128)
        hyper.setdefault("epochs", 20)
        model = _train_dense_classifier(X_tr, y_tr, hyper, rng)

    det = Detector(kind=kind, model=model, C=0.0, hyper=hyper,
                   data_hash=_dataset_hash(data))
    if len(test_idx) > 0:
        pred_unsafe = classify_batch(det, X_te)
        det.heldout_accuracy = float(np.mean(pred_unsafe == (y_te == 1)))
    return det


def _train_dense_classifier(X, y, hyper, rng) -> DenseNet:
    d = X.shape[1]
    hidden = tuple(hyper["hidden"])
    net = init_dense([d, *hidden, 2], ["relu"] * len(hidden) + ["linear"], rng)
    opt = Adam(net, hyper["lr"])
    n = len(y)
    # inverse-frequency weights keep the rare unsafe class from washing out
    counts = np.array([np.sum(y == 0), np.sum(y == 1)], dtype=float)
    class_w = n / (2.0 * counts)
    onehot = np.zeros((n, 2))
    onehot[np.arange(n), y] = 1.0
    batch = min(hyper["batch_size"], n)
    for _ in range(hyper["epochs"]):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            ix = order[start:start + batch]
            logits = forward(net, X[ix], keep_cache=True)
            p = _softmax(logits)
            w = class_w[y[ix]][:, None]
            grad = w * (p - onehot[ix]) / len(ix)
            gW, gb, _ = backward(net, grad)
            opt.step(gW, gb)
    return net


# ---------------------------------------------------------------------------
# Approximating constant range
# ---------------------------------------------------------------------------

@dataclass
class CRange:
    l: float
    h: float
    samples: np.ndarray

    def __post_init__(self):
        if self.l > self.h:
            raise DetectorError(f"invalid range [{self.l}, {self.h}]")
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.shape != (10,):
            raise DetectorError("expected exactly 10 samples")


def c_range(det: Detector, data: LabeledDataset) -> CRange:
    """Score-difference range over the training set, sampled at 10 points."""
    if len(data.features) == 0:
        raise DetectorError("empty dataset")
    p = scores_batch(det, data.features)
    diff = p[:, 0] - p[:, 1]
    lo, hi = float(np.min(diff)), float(np.max(diff))
    return CRange(lo, hi, np.linspace(lo, hi, 10))


def with_constant(det: Detector, C: float) -> Detector:
    """Copy of the detector with a different approximating constant."""
    return Detector(kind=det.kind, model=det.model, C=float(C),
                    heldout_accuracy=det.heldout_accuracy,
                    hyper=dict(det.hyper), data_hash=det.data_hash)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_detector(det: Detector, path) -> None:
    meta = {"kind": det.kind, "C": det.C, "hyper": _jsonable(det.hyper),
            "heldout_accuracy": det.heldout_accuracy,
            "data_hash": det.data_hash, "format_version": 1}
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    if det.kind == "dense":
        net = det.model
        meta["activations"] = list(net.activations)
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        for i, (W, b) in enumerate(zip(net.weights, net.biases)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
    else:
        rf = det.model
        meta["n_trees"] = len(rf.trees)
        meta["n_features"] = rf.n_features
        meta["feature_names"] = list(rf.feature_names)
        arrays["meta"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        arrays["importances"] = rf.importances
        for i, t in enumerate(rf.trees):
            arrays[f"t{i}_feature"] = t.feature
            arrays[f"t{i}_threshold"] = t.threshold
            arrays[f"t{i}_left"] = t.left
            arrays[f"t{i}_right"] = t.right
            arrays[f"t{i}_counts"] = t.counts
    np.savez(path, **arrays)


def load_detector(path) -> Detector:
    from .forest import _Tree
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["kind"] == "dense":
            acts = meta["activations"]
            net = DenseNet([data[f"W{i}"] for i in range(len(acts))],
                           [data[f"b{i}"] for i in range(len(acts))],
                           list(acts))
            model = net
        else:
            trees = []
            for i in range(meta["n_trees"]):
                t = _Tree()
                t.feature = data[f"t{i}_feature"]
                t.threshold = data[f"t{i}_threshold"]
                t.left = data[f"t{i}_left"]
                t.right = data[f"t{i}_right"]
                t.counts = data[f"t{i}_counts"]
                trees.append(t)
            model = RandomForest(trees=trees, importances=data["importances"],
                                 n_features=meta["n_features"],
                                 feature_names=meta["feature_names"])
        return Detector(kind=meta["kind"], model=model, C=meta["C"],
                        heldout_accuracy=meta["heldout_accuracy"],
                        hyper=meta["hyper"], data_hash=meta["data_hash"])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (tuple, list)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj
