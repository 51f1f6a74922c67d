"""Evidential and probabilistic classifiers on a source frame.

A classifier is a small dense feature extractor followed by a head: either a
prototype-based DS layer emitting a mass function whose focal sets are the
named-class singletons plus the whole frame, or a softmax layer emitting a
Bayesian mass function.

Conventions: the anything-else class (when a frame has one) is listed last
and receives no singleton mass; evidence for it can only be expressed through
the mass on the whole frame. Mass vectors are laid out as
``[singletons in named-class order..., whole frame]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .autodiff.tape import Node, Tape
from .belief import Frame, MassFunction, make_frame
from .errors import (
    EmptyDataset,
    FrameMismatch,
    NonFiniteInput,
    ShapeMismatch,
)


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    neg = x < 0
    t = np.exp(np.where(neg, x, -x))
    out[...] = np.where(neg, t / (1.0 + t), 1.0 / (1.0 + t))
    return out


def _softmax(x, axis=-1):
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


# ---------------------------------------------------------------------------
# feature extractor

@dataclass(frozen=True)
class FeatureExtractorParams:
    """Dense relu layers; weights[i] has shape (out_i, in_i)."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ShapeMismatch("need one bias per weight matrix and >= 1 layer")
        prev = self.weights[0].shape[1]
        for w, b in zip(self.weights, self.biases):
            if w.ndim != 2 or b.ndim != 1 or w.shape[0] != b.shape[0]:
                raise ShapeMismatch(f"layer shapes {w.shape}/{b.shape} inconsistent")
            if w.shape[1] != prev:
                raise ShapeMismatch(f"layer input {w.shape[1]} != previous output {prev}")
            prev = w.shape[0]
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise NonFiniteInput("extractor parameters contain non-finite values")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    def param_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"w{i}"] = w
            out[f"b{i}"] = b
        return out

    def with_params(self, arrays) -> "FeatureExtractorParams":
        n = len(self.weights)
        return FeatureExtractorParams(
            tuple(np.asarray(arrays[f"w{i}"], dtype=np.float64) for i in range(n)),
            tuple(np.asarray(arrays[f"b{i}"], dtype=np.float64) for i in range(n)))


def init_extractor(layer_dims: list[int], seed: int) -> FeatureExtractorParams:
    """He-normal weights, zero biases; layer_dims = [in, h1, ..., P]."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(layer_dims, layer_dims[1:]):
        ws.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return FeatureExtractorParams(tuple(ws), tuple(bs))


def extract_features(params: FeatureExtractorParams, x) -> np.ndarray:
    """Forward one input vector through the relu stack."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_dim,):
        raise ShapeMismatch(f"input shape {x.shape}, extractor wants ({params.input_dim},)")
    if not np.isfinite(x).all():
        raise NonFiniteInput("input contains non-finite values")
    for w, b in zip(params.weights, params.biases):
        x = np.maximum(w @ x + b, 0.0)
    return x


def extract_features_batch(params: FeatureExtractorParams, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ShapeMismatch(f"batch shape {X.shape}, extractor wants (n, {params.input_dim})")
    if not np.isfinite(X).all():
        raise NonFiniteInput("input contains non-finite values")
    for w, b in zip(params.weights, params.biases):
        X = np.maximum(X @ w.T + b, 0.0)
    return X


# ---------------------------------------------------------------------------
# DS layer

@dataclass(frozen=True)
class Prototype:
    """One evidence-emitting unit of a DS layer."""

    center: np.ndarray            # (P,)
    eta: float                    # spread pre-parameter; scale is eta**2
    xi: float                     # reliability pre-parameter; alpha = sigmoid(xi)
    membership_logits: np.ndarray  # (M,) over the named classes

    @property
    def alpha(self) -> float:
        return float(_sigmoid(self.xi))

    @property
    def membership(self) -> np.ndarray:
        return _softmax(self.membership_logits)


@dataclass(frozen=True)
class DsLayerParams:
    """Prototype bank over a source frame.

    ``singleton_indices`` are the frame classes that receive singleton mass
    (all classes except a trailing anything-else class, when present).
    """

    frame: Frame
    singleton_indices: tuple[int, ...]
    centers: np.ndarray            # (I, P)
    etas: np.ndarray               # (I,)
    xis: np.ndarray                # (I,)
    membership_logits: np.ndarray  # (I, M)

    def __post_init__(self):
        n, m = self.centers.shape[0], len(self.singleton_indices)
        if n < 1:
            raise ShapeMismatch("DS layer needs at least one prototype")
        if m < 1 or any(i < 0 or i >= self.frame.size for i in self.singleton_indices):
            raise ShapeMismatch("singleton class indices out of range")
        if self.etas.shape != (n,) or self.xis.shape != (n,):
            raise ShapeMismatch("etas/xis must have one entry per prototype")
        if self.membership_logits.shape != (n, m):
            raise ShapeMismatch(
                f"membership logits {self.membership_logits.shape} != ({n}, {m})")

    @property
    def n_prototypes(self) -> int:
        return self.centers.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.centers.shape[1]

    def prototype(self, i: int) -> Prototype:
        return Prototype(self.centers[i], float(self.etas[i]), float(self.xis[i]),
                         self.membership_logits[i])

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {"centers": self.centers, "etas": self.etas, "xis": self.xis,
                "membership_logits": self.membership_logits}

    def with_params(self, arrays) -> "DsLayerParams":
        return replace(
            self,
            centers=np.asarray(arrays["centers"], dtype=np.float64),
            etas=np.asarray(arrays["etas"], dtype=np.float64),
            xis=np.asarray(arrays["xis"], dtype=np.float64),
            membership_logits=np.asarray(arrays["membership_logits"], dtype=np.float64))


def named_singleton_indices(frame: Frame, else_class: str | None) -> tuple[int, ...]:
    """All class indices except the designated anything-else class."""
    if else_class is None:
        return tuple(range(frame.size))
    skip = frame.index(else_class)
    return tuple(i for i in range(frame.size) if i != skip)


def prototype_mass(p: Prototype, feat, frame: Frame,
                   singleton_indices: tuple[int, ...] | None = None) -> MassFunction:
    """Mass function of one prototype given a feature vector.

    s = alpha * exp(-eta^2 * ||feat - center||^2); each named class k gets
    mass u_k * s and the whole frame keeps 1 - s, so the mass on the frame
    grows with the distance from the prototype.
    """
    feat = np.asarray(feat, dtype=np.float64)
    if feat.shape != p.center.shape:
        raise ShapeMismatch(f"feature shape {feat.shape} != center {p.center.shape}")
    if singleton_indices is None:
        singleton_indices = tuple(range(len(p.membership_logits)))
    if len(singleton_indices) != len(p.membership_logits):
        raise ShapeMismatch("membership length does not match singleton class count")
    d2 = float(np.sum((feat - p.center) ** 2))
    s = p.alpha * np.exp(-(p.eta ** 2) * d2)
    u = p.membership
    focal = {1 << singleton_indices[k]: float(u[k] * s) for k in range(len(u))}
    focal[frame.full_mask] = focal.get(frame.full_mask, 0.0) + float(1.0 - s)
    return MassFunction(frame, focal)


def ds_layer_masses(params: DsLayerParams, F) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized DS layer: returns normalized (singletons (n, M), ignorance (n,)).

    Folds the prototypes' simple mass functions with the closed-form update
    for the {singletons, whole-frame} focal structure - O(I*M) instead of
    enumerating subset pairs - and normalizes once at the layer output.
    """
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[1] != params.feature_dim:
        raise ShapeMismatch(f"features {F.shape}, DS layer wants (n, {params.feature_dim})")
    d2 = ((F[:, None, :] - params.centers[None, :, :]) ** 2).sum(axis=2)  # (n, I)
    s = _sigmoid(params.xis)[None, :] * np.exp(-(params.etas ** 2)[None, :] * d2)
    u = _softmax(params.membership_logits, axis=1)                        # (I, M)
    q = u[0][None, :] * s[:, 0:1]
    g = 1.0 - s[:, 0]
    for i in range(1, params.n_prototypes):
        p = u[i][None, :] * s[:, i:i + 1]
        t = 1.0 - s[:, i]
        q = q * p + q * t[:, None] + g[:, None] * p
        g = g * t
    total = q.sum(axis=1) + g
    return q / total[:, None], g / total


def ds_layer_forward(params: DsLayerParams, feat) -> MassFunction:
    """Orthogonal sum of all prototype mass functions, normalized."""
    q, g = ds_layer_masses(params, np.asarray(feat, dtype=np.float64)[None, :])
    focal = {1 << idx: float(q[0, k]) for k, idx in enumerate(params.singleton_indices)}
    focal[params.frame.full_mask] = focal.get(params.frame.full_mask, 0.0) + float(g[0])
    return MassFunction(params.frame, focal)


def _kmeanspp_indices(X: np.ndarray, k: int, rng) -> list[int]:
    n = len(X)
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            taken = set(chosen)
            nxt = next(j for j in range(n) if j not in taken)
        else:
            r = rng.random() * total
            nxt = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            nxt = min(nxt, n - 1)
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return chosen


def init_ds_layer(features, labels, n_prototypes: int, seed: int, frame: Frame,
                  singleton_indices: tuple[int, ...] | None = None) -> DsLayerParams:
    """Deterministic DS-layer initialization from a training feature set.

    Centers come from k-means++ seeding; eta is 1 / mean pairwise center
    distance; xi = 0 (alpha = 0.5); membership logits favour each center's
    class label with margin 1.
    """
    X = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyDataset("init_ds_layer needs a non-empty (n, P) feature set")
    if n_prototypes < 1 or n_prototypes > len(X):
        raise EmptyDataset(
            f"cannot place {n_prototypes} prototypes on {len(X)} samples")
    if singleton_indices is None:
        singleton_indices = tuple(range(frame.size))
    rng = np.random.default_rng(seed)
    idx = _kmeanspp_indices(X, n_prototypes, rng)
    centers = X[idx].copy()
    if n_prototypes > 1:
        diffs = centers[:, None, :] - centers[None, :, :]
        dists = np.sqrt((diffs ** 2).sum(axis=2))
        mean_dist = dists[np.triu_indices(n_prototypes, k=1)].mean()
        eta = 1.0 / mean_dist if mean_dist > 0 else 1.0
    else:
        eta = 1.0
    col = {cls: j for j, cls in enumerate(singleton_indices)}
    logits = np.zeros((n_prototypes, len(singleton_indices)))
    for r, i in enumerate(idx):
        j = col.get(int(labels[i]))
        if j is not None:
            logits[r, j] = 1.0
    return DsLayerParams(frame, tuple(singleton_indices), centers,
                         np.full(n_prototypes, eta), np.zeros(n_prototypes), logits)


# ---------------------------------------------------------------------------
# softmax head

@dataclass(frozen=True)
class SoftmaxHeadParams:
    """Linear softmax head over all frame classes (Bayesian mass output)."""

    frame: Frame
    weight: np.ndarray  # (M, P)
    bias: np.ndarray    # (M,)

    def __post_init__(self):
        if self.weight.ndim != 2 or self.weight.shape[0] != self.frame.size \
                or self.bias.shape != (self.frame.size,):
            raise ShapeMismatch(
                f"softmax head shapes {self.weight.shape}/{self.bias.shape} do not "
                f"match frame size {self.frame.size}")

    @property
    def feature_dim(self) -> int:
        return self.weight.shape[1]

    def param_arrays(self) -> dict[str, np.ndarray]:
        return {"weight": self.weight, "bias": self.bias}

    def with_params(self, arrays) -> "SoftmaxHeadParams":
        return replace(self, weight=np.asarray(arrays["weight"], dtype=np.float64),
                       bias=np.asarray(arrays["bias"], dtype=np.float64))


def init_softmax_head(frame: Frame, feature_dim: int) -> SoftmaxHeadParams:
    return SoftmaxHeadParams(frame, np.zeros((frame.size, feature_dim)),
                             np.zeros(frame.size))


def softmax_head_probs(params: SoftmaxHeadParams, F) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    if F.ndim != 2 or F.shape[1] != params.feature_dim:
        raise ShapeMismatch(f"features {F.shape}, head wants (n, {params.feature_dim})")
    return _softmax(F @ params.weight.T + params.bias, axis=1)


def softmax_head_forward(params: SoftmaxHeadParams, feat) -> MassFunction:
    """Bayesian mass function with softmax singleton probabilities."""
    probs = softmax_head_probs(params, np.asarray(feat, dtype=np.float64)[None, :])[0]
    return MassFunction(params.frame, {1 << i: float(p) for i, p in enumerate(probs)})


# ---------------------------------------------------------------------------
# classifier container and checkpoints

@dataclass(frozen=True)
class Classifier:
    """Feature extractor plus head, bound to a source frame."""

    source_id: str
    frame: Frame
    extractor: FeatureExtractorParams
    head: DsLayerParams | SoftmaxHeadParams

    @property
    def kind(self) -> str:
        return "ds" if isinstance(self.head, DsLayerParams) else "softmax"

    def classify(self, x) -> MassFunction:
        feat = extract_features(self.extractor, x)
        if self.kind == "ds":
            return ds_layer_forward(self.head, feat)
        return softmax_head_forward(self.head, feat)

    def param_arrays(self) -> dict[str, np.ndarray]:
        out = {f"extractor.{k}": v for k, v in self.extractor.param_arrays().items()}
        out.update({f"head.{k}": v for k, v in self.head.param_arrays().items()})
        return out

    def with_params(self, arrays) -> "Classifier":
        ext = {k.split(".", 1)[1]: v for k, v in arrays.items()
               if k.startswith("extractor.")}
        head = {k.split(".", 1)[1]: v for k, v in arrays.items()
                if k.startswith("head.")}
        return replace(self, extractor=self.extractor.with_params(ext),
                       head=self.head.with_params(head))


def save_checkpoint(clf: Classifier, path) -> None:
    """Versioned JSON: frame id, layer shapes, flat row-major parameter arrays."""
    doc = {
        "format": 1,
        "kind": clf.kind,
        "source_id": clf.source_id,
        "frame_id": clf.frame.id,
        "frame_classes": list(clf.frame.classes),
        "extractor": {
            "shapes": [list(w.shape) for w in clf.extractor.weights],
            "weights": [w.ravel().tolist() for w in clf.extractor.weights],
            "biases": [b.tolist() for b in clf.extractor.biases],
        },
    }
    if clf.kind == "ds":
        head = clf.head
        doc["head"] = {
            "singleton_indices": list(head.singleton_indices),
            "n_prototypes": head.n_prototypes,
            "feature_dim": head.feature_dim,
            "centers": head.centers.ravel().tolist(),
            "etas": head.etas.tolist(),
            "xis": head.xis.tolist(),
            "membership_logits": head.membership_logits.ravel().tolist(),
        }
    else:
        doc["head"] = {
            "shape": list(clf.head.weight.shape),
            "weight": clf.head.weight.ravel().tolist(),
            "bias": clf.head.bias.tolist(),
        }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_checkpoint(path, frame: Frame) -> Classifier:
    """Load a checkpoint; the stored frame id must match ``frame``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != 1:
        raise ValueError(f"unsupported checkpoint format {doc.get('format')!r}")
    if doc["frame_id"] != frame.id or list(frame.classes) != doc["frame_classes"]:
        raise FrameMismatch(
            f"checkpoint {path} was saved for frame {doc['frame_id']!r}, "
            f"not {frame.id!r}")
    ext = doc["extractor"]
    weights = tuple(np.asarray(w, dtype=np.float64).reshape(s)
                    for w, s in zip(ext["weights"], ext["shapes"]))
    biases = tuple(np.asarray(b, dtype=np.float64) for b in ext["biases"])
    extractor = FeatureExtractorParams(weights, biases)
    h = doc["head"]
    if doc["kind"] == "ds":
        m = len(h["singleton_indices"])
        head = DsLayerParams(
            frame, tuple(h["singleton_indices"]),
            np.asarray(h["centers"], dtype=np.float64).reshape(
                h["n_prototypes"], h["feature_dim"]),
            np.asarray(h["etas"], dtype=np.float64),
            np.asarray(h["xis"], dtype=np.float64),
            np.asarray(h["membership_logits"], dtype=np.float64).reshape(
                h["n_prototypes"], m))
    else:
        head = SoftmaxHeadParams(
            frame, np.asarray(h["weight"], dtype=np.float64).reshape(h["shape"]),
            np.asarray(h["bias"], dtype=np.float64))
    return Classifier(doc["source_id"], frame, extractor, head)


# ---------------------------------------------------------------------------
# tape graph builders

@dataclass
class DsLayerNodes:
    """Per-prototype preprocessed nodes, recorded once per tape."""

    centers: list[Node]
    eta_sq: list[Node]
    alphas: list[Node]
    memberships: list[Node]
    one: Node


def bind_extractor(tape: Tape, params: FeatureExtractorParams, prefix: str) -> list[tuple[Node, Node]]:
    return [(tape.param(f"{prefix}extractor.w{i}", w),
             tape.param(f"{prefix}extractor.b{i}", b))
            for i, (w, b) in enumerate(zip(params.weights, params.biases))]


def extractor_graph(tape: Tape, layers: list[tuple[Node, Node]], x: Node) -> Node:
    for w, b in layers:
        x = tape.relu(tape.affine(w, b, x))
    return x


def bind_ds_layer(tape: Tape, params: DsLayerParams, prefix: str) -> DsLayerNodes:
    n, p = params.n_prototypes, params.feature_dim
    m = len(params.singleton_indices)
    centers = tape.param(f"{prefix}head.centers", params.centers)
    etas = tape.param(f"{prefix}head.etas", params.etas)
    xis = tape.param(f"{prefix}head.xis", params.xis)
    logits = tape.param(f"{prefix}head.membership_logits", params.membership_logits)
    nodes = DsLayerNodes([], [], [], [], tape.constant([1.0]))
    for i in range(n):
        nodes.centers.append(tape.slice_of(centers, i * p, p))
        eta = tape.slice_of(etas, i, 1)
        nodes.eta_sq.append(tape.multiply(eta, eta))
        nodes.alphas.append(tape.sigmoid(tape.slice_of(xis, i, 1)))
        nodes.memberships.append(tape.softmax(tape.slice_of(logits, i * m, m)))
    return nodes


def ds_layer_graph(tape: Tape, nodes: DsLayerNodes, feat: Node) -> Node:
    """Normalized mass vector [singletons..., whole-frame] for one sample."""
    q = g = None
    for c, eta2, alpha, u in zip(nodes.centers, nodes.eta_sq, nodes.alphas,
                                 nodes.memberships):
        d2 = tape.squared_distance(feat, c)
        s = tape.multiply(alpha, tape.exp(tape.negate(tape.multiply(eta2, d2))))
        p = tape.multiply(u, s)
        t = tape.subtract(nodes.one, s)
        if q is None:
            q, g = p, t
        else:
            q = tape.add(tape.add(tape.multiply(q, p), tape.multiply(q, t)),
                         tape.multiply(g, p))
            g = tape.multiply(g, t)
    return tape.normalize_by_sum(tape.concat(q, g))


def bind_softmax_head(tape: Tape, params: SoftmaxHeadParams, prefix: str) -> tuple[Node, Node]:
    return (tape.param(f"{prefix}head.weight", params.weight),
            tape.param(f"{prefix}head.bias", params.bias))


def softmax_head_graph(tape: Tape, wb: tuple[Node, Node], feat: Node) -> Node:
    w, b = wb
    return tape.softmax(tape.affine(w, b, feat))
