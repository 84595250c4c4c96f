"""Edge-scoring encoder models with analytic per-tuple gradients.

A model embeds node feature rows and scores candidate edges by comparing
endpoint embeddings. Losses are contrastive over one edge tuple: the
positive edge against its sampled negatives. Gradients are hand-derived
(the trainer clips per-tuple gradients, so autograd frameworks buy nothing
here) and checked against finite differences in the test suite.
"""

from __future__ import annotations

import dataclasses
import struct

import numpy as np

from .rng import make_rng
from .sampling import EdgeTuple

LINEAR = "linear"
TWO_LAYER = "two_layer"

DOT = "dot"
COSINE = "cosine"

INFONCE = "infonce"
HINGE = "hinge"

_MAGIC = b"RDPM"
_VERSION = 1
_KIND_TAGS = {LINEAR: 0, TWO_LAYER: 1}
_TAG_KINDS = {v: k for k, v in _KIND_TAGS.items()}


@dataclasses.dataclass
class EncoderModel:
    """Dense encoder: linear map or one tanh hidden layer.

    ``weights`` is the flat parameter vector; the layout is row-major
    W (+ bias) per layer, in forward order.
    """

    kind: str
    in_dim: int
    out_dim: int
    weights: np.ndarray
    hidden_dim: int | None = None

    def __post_init__(self):
        if self.kind not in (LINEAR, TWO_LAYER):
            raise ValueError(f"unknown encoder kind {self.kind!r}")
        if self.kind == TWO_LAYER and not self.hidden_dim:
            raise ValueError("two_layer encoder needs hidden_dim")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("dims must be >= 1")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.num_params(),):
            raise ValueError(
                f"weights length {self.weights.size} != expected {self.num_params()}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")

    def num_params(self) -> int:
        if self.kind == LINEAR:
            return self.out_dim * self.in_dim + self.out_dim
        h = self.hidden_dim
        return h * self.in_dim + h + self.out_dim * h + self.out_dim

    def _unpack(self):
        """Views into the flat vector, no copies."""
        w = self.weights
        if self.kind == LINEAR:
            k = self.out_dim * self.in_dim
            return (w[:k].reshape(self.out_dim, self.in_dim), w[k:],)
        h = self.hidden_dim
        k1 = h * self.in_dim
        w1 = w[:k1].reshape(h, self.in_dim)
        b1 = w[k1:k1 + h]
        k2 = k1 + h + self.out_dim * h
        w2 = w[k1 + h:k2].reshape(self.out_dim, h)
        b2 = w[k2:]
        return (w1, b1, w2, b2)

    def encode(self, features: np.ndarray) -> np.ndarray:
        """Embed feature rows; accepts (d,) or (n, d)."""
        x = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if x.shape[1] != self.in_dim:
            raise ValueError(f"feature dim {x.shape[1]} != encoder in_dim {self.in_dim}")
        if self.kind == LINEAR:
            w, b = self._unpack()
            out = x @ w.T + b
        else:
            w1, b1, w2, b2 = self._unpack()
            out = np.tanh(x @ w1.T + b1) @ w2.T + b2
        return out[0] if np.asarray(features).ndim == 1 else out


def init_model(kind: str, in_dim: int, out_dim: int, seed: int,
               hidden_dim: int | None = None, scale: float | None = None) -> EncoderModel:
    """Seeded Gaussian init; weight std defaults to 1/sqrt(fan_in) per layer."""
    rng = make_rng(seed, 3)
    if kind == LINEAR:
        parts = [(out_dim, in_dim), (out_dim,)]
    else:
        if not hidden_dim:
            raise ValueError("two_layer encoder needs hidden_dim")
        parts = [(hidden_dim, in_dim), (hidden_dim,), (out_dim, hidden_dim), (out_dim,)]
    flat = []
    for shape in parts:
        if len(shape) == 1:
            flat.append(np.zeros(shape))
        else:
            std = scale if scale is not None else 1.0 / np.sqrt(shape[1])
            flat.append(rng.normal(0.0, std, size=shape).ravel())
    return EncoderModel(kind=kind, in_dim=in_dim, out_dim=out_dim,
                        weights=np.concatenate(flat), hidden_dim=hidden_dim)


@dataclasses.dataclass(frozen=True)
class LossSpec:
    kind: str
    margin: float = 1.0

    def __post_init__(self):
        if self.kind not in (INFONCE, HINGE):
            raise ValueError(f"unknown loss kind {self.kind!r}")
        if self.kind == HINGE and not self.margin > 0:
            raise ValueError("hinge margin must be positive")


def score(h_u: np.ndarray, h_v: np.ndarray, kind: str = DOT) -> float:
    h_u = np.asarray(h_u, dtype=np.float64)
    h_v = np.asarray(h_v, dtype=np.float64)
    if h_u.shape != h_v.shape:
        raise ValueError("embedding dims differ")
    if kind == DOT:
        return float(h_u @ h_v)
    if kind == COSINE:
        nu, nv = np.linalg.norm(h_u), np.linalg.norm(h_v)
        if nu == 0 or nv == 0:
            raise ValueError("cosine score undefined for zero embeddings")
        return float(h_u @ h_v / (nu * nv))
    raise ValueError(f"unknown score kind {kind!r}")


def _score_and_grads(h_a, h_b, kind):
    """Score plus its gradients in both embeddings."""
    if kind == DOT:
        return float(h_a @ h_b), h_b.copy(), h_a.copy()
    na, nb = np.linalg.norm(h_a), np.linalg.norm(h_b)
    if na == 0 or nb == 0:
        raise ValueError("cosine score undefined for zero embeddings")
    ua, ub = h_a / na, h_b / nb
    s = float(ua @ ub)
    return s, (ub - s * ua) / na, (ua - s * ub) / nb


def tuple_loss_grad(model: EncoderModel, features: np.ndarray, tup: EdgeTuple,
                    loss: LossSpec, score_kind: str = DOT):
    """Per-tuple loss and its gradient in the flat parameter vector.

    The positive score competes against one score per negative edge.
    InfoNCE is the softmax cross-entropy with the positive as the label;
    hinge sums margin violations. Backprop runs through unique node
    embeddings (a node can appear in several of the tuple's edges).
    """
    features = np.asarray(features, dtype=np.float64)
    nodes = sorted({tup.positive[0], tup.positive[1],
                    *(n for e in tup.negatives for n in e)})
    if max(nodes) >= features.shape[0]:
        raise ValueError(f"node {max(nodes)} has no feature row")
    index = {n: i for i, n in enumerate(nodes)}
    x = features[nodes]
    h = np.atleast_2d(model.encode(x))

    edges = [tup.positive, *tup.negatives]
    scores = np.empty(len(edges))
    grads_a = np.empty((len(edges), model.out_dim))
    grads_b = np.empty((len(edges), model.out_dim))
    for i, (a, b) in enumerate(edges):
        scores[i], grads_a[i], grads_b[i] = _score_and_grads(
            h[index[a]], h[index[b]], score_kind)

    if loss.kind == INFONCE:
        m = scores.max()
        z = np.exp(scores - m)
        p = z / z.sum()
        value = float(-scores[0] + m + np.log(z.sum()))
        dscore = p.copy()
        dscore[0] -= 1.0
    else:
        slack = loss.margin - scores[0] + scores[1:]
        active = slack > 0
        value = float(slack[active].sum())
        dscore = np.zeros_like(scores)
        dscore[0] = -float(active.sum())
        dscore[1:] = active.astype(np.float64)

    dh = np.zeros_like(h)
    for i, (a, b) in enumerate(edges):
        dh[index[a]] += dscore[i] * grads_a[i]
        dh[index[b]] += dscore[i] * grads_b[i]

    return value, _backprop(model, x, dh)


def _backprop(model: EncoderModel, x: np.ndarray, dh: np.ndarray) -> np.ndarray:
    if model.kind == LINEAR:
        dw = dh.T @ x
        db = dh.sum(axis=0)
        return np.concatenate([dw.ravel(), db])
    w1, b1, w2, b2 = model._unpack()
    pre = x @ w1.T + b1
    a1 = np.tanh(pre)
    dw2 = dh.T @ a1
    db2 = dh.sum(axis=0)
    da1 = dh @ w2
    dpre = da1 * (1.0 - a1 * a1)
    dw1 = dpre.T @ x
    db1 = dpre.sum(axis=0)
    return np.concatenate([dw1.ravel(), db1, dw2.ravel(), db2])


# --------------------------------------------------------------------------
# checkpoint format: RDPM | version u16 | kind u8 | in u32 | out u32 |
# hidden u32 | float64 weights, all little-endian

def save_model(model: EncoderModel, path) -> None:
    header = _MAGIC + struct.pack("<HBIII", _VERSION, _KIND_TAGS[model.kind],
                                  model.in_dim, model.out_dim,
                                  model.hidden_dim or 0)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(model.weights.astype("<f8").tobytes())


def load_model(path) -> EncoderModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise ValueError("not a model checkpoint (bad magic)")
    version, tag, in_dim, out_dim, hidden = struct.unpack("<HBIII", blob[4:19])
    if version != _VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    if tag not in _TAG_KINDS:
        raise ValueError(f"unknown encoder tag {tag}")
    weights = np.frombuffer(blob[19:], dtype="<f8").astype(np.float64)
    return EncoderModel(kind=_TAG_KINDS[tag], in_dim=in_dim, out_dim=out_dim,
                        weights=weights, hidden_dim=hidden or None)
