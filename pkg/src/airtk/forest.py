"""Deterministic one-vs-rest random forest over patch feature vectors.

Every class gets its own ensemble of binary trees grown on bootstrap
resamples with Gini-impurity splits over random feature subsets. Leaves
store the positive fraction of their samples, and ensemble probabilities
are the mean leaf fraction, so outputs are continuous in [0, 1].

Determinism contract: tree (class_index, tree_index) is grown from the
RNG seeded with derive_seed(seed, class_index, tree_index), thresholds sit
at midpoints of consecutive distinct sorted values, and impurity ties break
toward the lowest feature index, then the lowest threshold. Identical
inputs and seed therefore produce byte-identical model files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dataset import LabelSet, Ontology
from .embedding import EmbeddingSource, FeatureVector
from .errors import (
    BadMagic,
    DegenerateClass,
    DimensionMismatch,
    IoError,
    MalformedFile,
    VersionMismatch,
)
from .seeding import derive_seed

MODEL_MAGIC = b"AIRF"
MODEL_FORMAT_CHAR = b"1"
MODEL_VERSION = 1

_LEAF = -1


@dataclass(frozen=True)
class Hyperparameters:
    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | None = None  # None -> round(sqrt(d))
    bootstrap: bool = True

    def resolved_features_per_split(self, d: int) -> int:
        k = self.features_per_split or int(round(np.sqrt(d)))
        return max(1, min(k, d))


@dataclass
class DecisionTree:
    """Flat node arrays; node 0 is the root.

    feature[i] == -1 marks a leaf whose positive fraction is value[i];
    otherwise value[i] is the split threshold and samples with
    x[feature[i]] <= value[i] go to left[i], the rest to right[i].
    """

    feature: np.ndarray  # int32
    value: np.ndarray  # float64
    left: np.ndarray  # int32
    right: np.ndarray  # int32

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_one(self, x: np.ndarray) -> float:
        i = 0
        while self.feature[i] != _LEAF:
            i = self.left[i] if x[self.feature[i]] <= self.value[i] else self.right[i]
        return float(self.value[i])

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        idx = np.zeros(len(X), dtype=np.int64)
        while True:
            f = self.feature[idx]
            internal = f != _LEAF
            if not internal.any():
                return self.value[idx]
            rows = np.flatnonzero(internal)
            go_left = X[rows, f[rows]] <= self.value[idx[rows]]
            idx[rows] = np.where(go_left, self.left[idx[rows]], self.right[idx[rows]])


def _gini(pos: float, n: float) -> float:
    p = pos / n
    return 2.0 * p * (1.0 - p)


def _best_split(X, y, idx, feature_subset, min_samples_leaf):
    """Return (gain, feature, threshold) of the best Gini split, or None."""
    n = len(idx)
    y_node = y[idx]
    pos_total = int(y_node.sum())
    parent = _gini(pos_total, n)
    best = None  # (gain, feature, threshold)
    for f in np.sort(feature_subset):
        xs = X[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_sorted = xs[order]
        ys_sorted = y_node[order]
        prefix_pos = np.cumsum(ys_sorted)

        # candidate boundaries between distinct consecutive values
        nl = np.arange(1, n)
        boundary = xs_sorted[1:] != xs_sorted[:-1]
        valid = boundary & (nl >= min_samples_leaf) & (n - nl >= min_samples_leaf)
        if not valid.any():
            continue
        nl = nl[valid].astype(np.float64)
        nr = n - nl
        pl = prefix_pos[:-1][valid].astype(np.float64)
        pr = pos_total - pl
        child = (nl * (2 * (pl / nl) * (1 - pl / nl)) + nr * (2 * (pr / nr) * (1 - pr / nr))) / n
        gains = parent - child
        k = int(np.argmax(gains))  # first max = lowest threshold
        gain = float(gains[k])
        if gain <= 0.0:
            continue
        left_val = xs_sorted[:-1][valid][k]
        right_val = xs_sorted[1:][valid][k]
        threshold = (float(left_val) + float(right_val)) / 2.0
        if best is None or gain > best[0]:  # features scanned ascending, ties keep the first
            best = (gain, int(f), threshold)
    return best


def grow_tree(X: np.ndarray, y: np.ndarray, hp: Hyperparameters, seed: int) -> DecisionTree:
    """Grow one binary tree on a bootstrap resample (unless disabled)."""
    rng = np.random.default_rng(seed)
    n, d = X.shape
    idx_root = rng.integers(0, n, n) if hp.bootstrap else np.arange(n)
    k = hp.resolved_features_per_split(d)

    feature, value, left, right = [], [], [], []

    def new_node():
        feature.append(_LEAF)
        value.append(0.0)
        left.append(_LEAF)
        right.append(_LEAF)
        return len(feature) - 1

    stack = [(idx_root, 0, new_node())]
    while stack:
        idx, depth, slot = stack.pop()
        pos = int(y[idx].sum())
        n_node = len(idx)
        depth_capped = hp.max_depth is not None and depth >= hp.max_depth
        if pos == 0 or pos == n_node or depth_capped or n_node < 2 * hp.min_samples_leaf:
            value[slot] = pos / n_node
            continue
        subset = rng.choice(d, size=k, replace=False)
        best = _best_split(X, y, idx, subset, hp.min_samples_leaf)
        if best is None:
            value[slot] = pos / n_node
            continue
        _, f, threshold = best
        feature[slot] = f
        value[slot] = threshold
        go_left = X[idx, f] <= threshold
        left_slot, right_slot = new_node(), new_node()
        left[slot], right[slot] = left_slot, right_slot
        # right pushed first so the left child is grown (and draws RNG) first
        stack.append((idx[~go_left], depth + 1, right_slot))
        stack.append((idx[go_left], depth + 1, left_slot))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int32),
        value=np.array(value, dtype=np.float64),
        left=np.array(left, dtype=np.int32),
        right=np.array(right, dtype=np.int32),
    )


@dataclass
class ForestModel:
    ensembles: list  # n_classes lists of n_trees DecisionTrees
    ontology: Ontology
    source: EmbeddingSource
    frontend_hash: str
    seed: int
    hp: Hyperparameters = field(default_factory=Hyperparameters)

    @property
    def n_classes(self) -> int:
        return len(self.ensembles)

    @property
    def dimension(self) -> int:
        return self.source.dimension


@dataclass(frozen=True)
class PatchPrediction:
    probabilities: np.ndarray  # (n_classes,), each in [0, 1]
    clip_id: str
    patch_index: int
    start_s: float
    end_s: float


def train(features, labels, hp: Hyperparameters, seed: int, *, ontology: Ontology,
          source: EmbeddingSource, frontend_hash: str = "") -> ForestModel:
    """Fit one bootstrap ensemble per ontology class."""
    if len(features) != len(labels):
        raise ValueError("features and labels must align")
    if len(features) < 2:
        raise ValueError("need at least 2 training samples")
    try:
        X = np.stack([np.asarray(f.values, dtype=np.float64) for f in features])
    except ValueError as e:
        raise DimensionMismatch("feature vectors have unequal dimensions") from e
    if X.shape[1] != source.dimension:
        raise DimensionMismatch(f"features have d={X.shape[1]}, source declares {source.dimension}")
    Y = np.stack([l.bits for l in labels]).astype(np.int8)
    if Y.shape[1] != len(ontology):
        raise DimensionMismatch("label width does not match ontology size")

    ensembles = []
    for c in range(len(ontology)):
        y = Y[:, c]
        pos = int(y.sum())
        if pos == 0 or pos == len(y):
            raise DegenerateClass(f"class {ontology.classes[c]!r} is all-{'positive' if pos else 'negative'}")
        ensembles.append(
            [grow_tree(X, y, hp, derive_seed(seed, c, t)) for t in range(hp.n_trees)]
        )
    return ForestModel(ensembles, ontology, source, frontend_hash, seed, hp)


def predict(model: ForestModel, feature: FeatureVector) -> PatchPrediction:
    """Per-class probability = mean leaf fraction over the class's trees."""
    x = np.asarray(feature.values, dtype=np.float64)
    if len(x) != model.dimension:
        raise DimensionMismatch(f"feature has d={len(x)}, model expects {model.dimension}")
    probs = np.array(
        [np.mean([t.predict_one(x) for t in trees]) for trees in model.ensembles]
    )
    return PatchPrediction(probs, feature.clip_id, feature.patch_index, feature.start_s, feature.end_s)


def predict_batch(model: ForestModel, features) -> list[PatchPrediction]:
    """Vectorized predict over many feature vectors."""
    if not features:
        return []
    X = np.stack([np.asarray(f.values, dtype=np.float64) for f in features])
    if X.shape[1] != model.dimension:
        raise DimensionMismatch(f"features have d={X.shape[1]}, model expects {model.dimension}")
    probs = np.empty((len(features), model.n_classes))
    for c, trees in enumerate(model.ensembles):
        acc = np.zeros(len(features))
        for t in trees:
            acc += t.predict_batch(X)
        probs[:, c] = acc / len(trees)
    return [
        PatchPrediction(probs[i].copy(), f.clip_id, f.patch_index, f.start_s, f.end_s)
        for i, f in enumerate(features)
    ]


# --- serialization ----------------------------------------------------------


def save(model: ForestModel, path) -> None:
    """Write the AIRF1 binary model format (little-endian, IEEE 754 doubles)."""
    header = {
        "classes": model.ontology.classes,
        "aliases": {a: i for a, i in sorted(model.ontology.aliases.items())},
        "source": asdict(model.source),
        "frontend_hash": model.frontend_hash,
        "seed": model.seed,
        "hp": asdict(model.hp),
        "n_trees": model.hp.n_trees,
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    try:
        with open(path, "wb") as f:
            f.write(MODEL_MAGIC + MODEL_FORMAT_CHAR + bytes([MODEL_VERSION]))
            f.write(struct.pack("<I", len(blob)))
            f.write(blob)
            for trees in model.ensembles:
                for t in trees:
                    f.write(struct.pack("<I", t.n_nodes))
                    f.write(t.feature.astype("<i4").tobytes())
                    f.write(t.value.astype("<f8").tobytes())
                    f.write(t.left.astype("<i4").tobytes())
                    f.write(t.right.astype("<i4").tobytes())
    except OSError as e:
        raise IoError(str(e)) from e


def load(path) -> ForestModel:
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise IoError(str(e)) from e
    if len(blob) < 10:
        raise MalformedFile(f"{path}: too short for a model file")
    if blob[:4] != MODEL_MAGIC:
        raise BadMagic(f"{path}: not an AIRF model file")
    if blob[4:5] != MODEL_FORMAT_CHAR or blob[5] != MODEL_VERSION:
        raise VersionMismatch(f"{path}: unsupported model format version")
    (header_len,) = struct.unpack_from("<I", blob, 6)
    pos = 10
    if pos + header_len > len(blob):
        raise MalformedFile(f"{path}: truncated header")
    try:
        header = json.loads(blob[pos : pos + header_len])
    except ValueError as e:
        raise MalformedFile(f"{path}: bad header JSON") from e
    pos += header_len

    classes = header["classes"]
    ontology = Ontology(classes)
    ontology.aliases = {a: int(i) for a, i in header["aliases"].items()}
    source = EmbeddingSource(**header["source"])
    hp = Hyperparameters(**header["hp"])

    ensembles = []
    for _ in range(len(classes)):
        trees = []
        for _ in range(hp.n_trees):
            if pos + 4 > len(blob):
                raise MalformedFile(f"{path}: truncated tree table")
            (n_nodes,) = struct.unpack_from("<I", blob, pos)
            pos += 4
            need = n_nodes * (4 + 8 + 4 + 4)
            if pos + need > len(blob):
                raise MalformedFile(f"{path}: truncated tree nodes")
            feature = np.frombuffer(blob, dtype="<i4", count=n_nodes, offset=pos).astype(np.int32)
            pos += 4 * n_nodes
            value = np.frombuffer(blob, dtype="<f8", count=n_nodes, offset=pos).astype(np.float64)
            pos += 8 * n_nodes
            left = np.frombuffer(blob, dtype="<i4", count=n_nodes, offset=pos).astype(np.int32)
            pos += 4 * n_nodes
            right = np.frombuffer(blob, dtype="<i4", count=n_nodes, offset=pos).astype(np.int32)
            pos += 4 * n_nodes
            trees.append(DecisionTree(feature, value, left, right))
        ensembles.append(trees)
    if pos != len(blob):
        raise MalformedFile(f"{path}: {len(blob) - pos} trailing bytes")
    return ForestModel(ensembles, ontology, source, header["frontend_hash"], int(header["seed"]), hp)
