"""Sparse-input ranking network trained with a pairwise hinge loss.

Each input feature connects to exactly ``K`` units of the first hidden
layer; deeper layers are dense.  Hidden units are sigmoids and the single
output is linear.  A network with no hidden layers is the linear ranker.

All arithmetic is float64.
"""
from __future__ import annotations

import copy
import json
import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .featurizer import SparseFeatureVector
from .patterns import PatternTable

log = logging.getLogger(__name__)

MODEL_FORMAT = "treematch-model"
MODEL_VERSION = 1


class NetError(ValueError):
    pass


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


@dataclass
class Architecture:
    input_dim: int
    hidden: tuple[int, ...]
    connectivity: np.ndarray  # (input_dim, K) sorted unit ids in the first layer

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        conn = np.asarray(self.connectivity, dtype=np.int64)
        if conn.ndim != 2 or conn.shape[0] != self.input_dim:
            if self.input_dim == 0:
                raise NetError("connectivity of an empty input layer must have shape (0, K)")
            conn = conn.reshape(self.input_dim, -1)
        self.connectivity = conn
        width = self.first_width
        if conn.shape[1] < 1 or conn.shape[1] > width:
            raise NetError(f"NodeDensity K={conn.shape[1]} must lie in 1..{width}")
        if conn.size and (conn.min() < 0 or conn.max() >= width):
            raise NetError("connectivity refers to a unit outside the first layer")
        if conn.size and np.any(np.diff(np.sort(conn, axis=1), axis=1) == 0):
            raise NetError("an input connects to the same unit twice")

    @property
    def first_width(self) -> int:
        return self.hidden[0] if self.hidden else 1

    @property
    def k(self) -> int:
        return self.connectivity.shape[1]

    @property
    def sizes(self) -> tuple[int, ...]:
        """Widths after the sparse layer, ending with the output."""
        return self.hidden + (1,) if self.hidden else (1,)

    def loads(self, freq) -> np.ndarray:
        out = np.zeros(self.first_width)
        np.add.at(out, self.connectivity.ravel(),
                  np.repeat(np.asarray(freq, dtype=np.float64), self.k))
        return out


@dataclass
class ModelParams:
    w1: np.ndarray               # (input_dim, K), aligned with connectivity
    b1: np.ndarray               # (first_width,)
    weights: list[np.ndarray]    # dense (out, in) matrices after the first layer
    biases: list[np.ndarray]

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def check(self, arch: Architecture) -> None:
        if self.w1.shape != arch.connectivity.shape:
            raise NetError(f"w1 shape {self.w1.shape} != connectivity {arch.connectivity.shape}")
        if self.b1.shape != (arch.first_width,):
            raise NetError("b1 shape mismatch")
        widths = arch.sizes
        if len(self.weights) != len(widths) - 1 or len(self.biases) != len(widths) - 1:
            raise NetError("number of dense layers does not match architecture")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (widths[l + 1], widths[l]) or b.shape != (widths[l + 1],):
                raise NetError(f"dense layer {l} has shape {w.shape}/{b.shape}")

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w1.ravel(), self.b1]
                              + [a.ravel() for pair in zip(self.weights, self.biases) for a in pair])


# ---------------------------------------------------------------- building

def learn_architecture(table: PatternTable | Sequence[float], h1: int, k: int, seed: int = 0,
                       hidden: Sequence[int] | None = None) -> Architecture:
    """Balanced sparse first layer.

    Features are visited by decreasing frequency (support_pos + support_neg;
    equal frequencies in seeded random order) and each is wired to the ``K``
    units with the smallest accumulated load, lower unit id first on ties.
    """
    if not 1 <= k <= h1:
        raise NetError(f"NodeDensity K={k} must lie in 1..h1={h1}")
    freq = np.asarray(table.frequencies() if isinstance(table, PatternTable) else table,
                      dtype=np.float64)
    n = freq.size
    rng = np.random.default_rng(seed)
    tiebreak = rng.permutation(n)
    order = np.lexsort((tiebreak, -freq))
    loads = np.zeros(h1)
    conn = np.zeros((n, k), dtype=np.int64)
    for i in order:
        units = np.argsort(loads, kind="stable")[:k]
        conn[i] = np.sort(units)
        loads[units] += freq[i]
    hidden = tuple(hidden) if hidden is not None else (h1, 40, 10)
    if hidden[0] != h1:
        raise NetError("hidden[0] must equal h1")
    return Architecture(n, hidden, conn)


def linear_architecture(input_dim: int) -> Architecture:
    return Architecture(input_dim, (), np.zeros((input_dim, 1), dtype=np.int64))


def init_params(arch: Architecture, seed: int = 0) -> ModelParams:
    """Glorot-uniform init; a first-layer unit's fan-in is its in-degree."""
    rng = np.random.default_rng(seed)
    widths = arch.sizes
    indeg = np.bincount(arch.connectivity.ravel(), minlength=arch.first_width)
    fan_out = widths[1] if len(widths) > 1 else 1
    limit = np.sqrt(6.0 / (indeg[arch.connectivity] + fan_out))
    w1 = rng.uniform(-1.0, 1.0, size=arch.connectivity.shape) * limit
    b1 = np.zeros(arch.first_width)
    weights, biases = [], []
    for fin, fout in zip(widths[:-1], widths[1:]):
        lim = np.sqrt(6.0 / (fin + fout))
        weights.append(rng.uniform(-lim, lim, size=(fout, fin)))
        biases.append(np.zeros(fout))
    return ModelParams(w1, b1, weights, biases)


# ------------------------------------------------------------ forward/back

def _check_dims(arch, xs):
    for x in xs:
        if x.dimension != arch.input_dim:
            raise NetError(f"feature dimension {x.dimension} != input_dim {arch.input_dim}")


def _gather(xs: Sequence[SparseFeatureVector]):
    rows = np.repeat(np.arange(len(xs)), [len(x) for x in xs])
    cols = np.concatenate([x.active for x in xs]) if xs else np.zeros(0, dtype=np.int64)
    return rows, cols.astype(np.int64)


def _first_layer(params, arch, rows, cols, batch):
    z = np.tile(params.b1, (batch, 1))
    k = arch.k
    np.add.at(z, (np.repeat(rows, k), arch.connectivity[cols].ravel()), params.w1[cols].ravel())
    return z


@dataclass
class _Cache:
    rows: np.ndarray
    cols: np.ndarray
    acts: list   # post-activation (after dropout) per layer, last is the score column
    pre: list    # sigmoid outputs before dropout, per hidden layer
    masks: list  # scaled keep masks per hidden layer or None


def _forward(params: ModelParams, arch: Architecture, xs, masks=None) -> _Cache:
    rows, cols = _gather(xs)
    z = _first_layer(params, arch, rows, cols, len(xs))
    acts, pre, used = [], [], []
    n_hidden = len(arch.hidden)
    a = z
    for layer in range(n_hidden + 1):
        if layer > 0:
            w, b = params.weights[layer - 1], params.biases[layer - 1]
            a = a @ w.T + b
        if layer < n_hidden:
            s = sigmoid(a)
            pre.append(s)
            m = None if masks is None else masks[layer]
            used.append(m)
            a = s * m if m is not None else s
        acts.append(a)
    return _Cache(rows, cols, acts, pre, used)


def forward_batch(params, arch, xs: Sequence[SparseFeatureVector], masks=None) -> np.ndarray:
    _check_dims(arch, xs)
    return _forward(params, arch, list(xs), masks).acts[-1][:, 0]


def forward(params, arch, x: SparseFeatureVector, dropout_masks=None) -> float:
    """Score ``s(x, y)`` of one featurised pair.

    ``dropout_masks`` holds one array per hidden layer, already scaled by
    ``1 / (1 - rate)`` where kept and 0 where dropped.
    """
    masks = None if dropout_masks is None else [np.asarray(m)[None, :] for m in dropout_masks]
    return float(forward_batch(params, arch, [x], masks)[0])


@dataclass
class SparseGrad:
    rows: np.ndarray        # first-layer input rows that received gradient
    w1: np.ndarray          # (len(rows), K)
    b1: np.ndarray
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def dense_w1(self, arch: Architecture) -> np.ndarray:
        out = np.zeros(arch.connectivity.shape)
        out[self.rows] = self.w1
        return out


def _backward(params, arch, cache: _Cache, dscore: np.ndarray) -> SparseGrad:
    """Backprop ``sum_b dscore[b] * s(x_b)`` through a cached forward pass."""
    n_hidden = len(arch.hidden)
    delta = dscore[:, None]
    gw, gb = [None] * len(params.weights), [None] * len(params.biases)
    for layer in range(n_hidden, 0, -1):
        a_prev = cache.acts[layer - 1]
        gw[layer - 1] = delta.T @ a_prev
        gb[layer - 1] = delta.sum(axis=0)
        delta = delta @ params.weights[layer - 1]
        m = cache.masks[layer - 1]
        if m is not None:
            delta = delta * m
        s = cache.pre[layer - 1]
        delta = delta * s * (1.0 - s)
    # delta is now d/dz of the first layer, shape (batch, first_width)
    rows, cols = cache.rows, cache.cols
    uniq, inv = np.unique(cols, return_inverse=True)
    g1 = np.zeros((uniq.size, arch.k))
    np.add.at(g1, inv, delta[rows[:, None], arch.connectivity[cols]])
    return SparseGrad(uniq, g1, delta.sum(axis=0), gw, gb)


def backward_pair(params, arch, x_pos, x_neg, margin: float = 1.0,
                  masks=None) -> tuple[float, SparseGrad]:
    """Hinge ``max(0, m + s(neg) - s(pos))`` and its gradient.

    First-layer gradient rows exist only for inputs active in either vector.
    """
    _check_dims(arch, [x_pos, x_neg])
    return backward_batch(params, arch, [x_pos], [x_neg], margin, masks)


def backward_batch(params, arch, pos, neg, margin: float, masks=None) -> tuple[float, SparseGrad]:
    """Summed hinge loss and gradient over aligned (pos, neg) lists.

    The batch is evaluated as ``pos + neg`` stacked; ``masks`` (if any) are
    per-layer arrays with one row per stacked example.
    """
    xs = list(pos) + list(neg)
    nb = len(pos)
    cache = _forward(params, arch, xs, masks)
    s = cache.acts[-1][:, 0]
    viol = margin + s[nb:] - s[:nb]
    on = viol > 0
    loss = float(viol[on].sum())
    dscore = np.concatenate([-on.astype(np.float64), on.astype(np.float64)])
    if not on.any():
        return 0.0, _zero_grad(params, arch)
    return loss, _backward(params, arch, cache, dscore)


def _zero_grad(params, arch) -> SparseGrad:
    return SparseGrad(np.zeros(0, dtype=np.int64), np.zeros((0, arch.k)),
                      np.zeros_like(params.b1), [np.zeros_like(w) for w in params.weights],
                      [np.zeros_like(b) for b in params.biases])


def sgd_step(params: ModelParams, grad: SparseGrad, lr: float, l2: float = 0.0,
             scale: float = 1.0) -> None:
    """In-place update ``p -= lr * (scale * g + l2 * p)``.

    Weight decay reaches only first-layer rows present in ``grad.rows``;
    biases are not decayed.
    """
    if grad.rows.size:
        rows = grad.rows
        params.w1[rows] -= lr * (scale * grad.w1 + l2 * params.w1[rows])
    params.b1 -= lr * (scale * grad.b1)
    for w, g in zip(params.weights, grad.weights):
        w -= lr * (scale * g + l2 * w)
    for b, g in zip(params.biases, grad.biases):
        b -= lr * (scale * g)


# ---------------------------------------------------------------- training

@dataclass
class TrainConfig:
    margin: float = 1.0
    lr: float = 3.0  # applied to the batch-mean gradient
    batch_size: int = 32
    dropout: float = 0.2
    max_epochs: int = 60
    patience: int = 15
    seed: int = 0
    l2: float = 1e-5

    def __post_init__(self):
        if self.margin <= 0:
            raise NetError("margin must be > 0")
        if not 0.0 <= self.dropout < 1.0:
            raise NetError("dropout rate must lie in [0, 1)")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise NetError("batch_size and patience must be >= 1, max_epochs >= 0")


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    valid_p_at_1: float


def group_p_at_1(score: Callable, groups: Sequence[Sequence[SparseFeatureVector]]) -> float:
    """P@1 over groups of feature vectors with the gold candidate first;
    ties count as losses."""
    wins = 0
    for g in groups:
        s = score(list(g))
        wins += bool(np.all(s[0] > s[1:]))
    return wins / len(groups)


def _masks(rng, arch, batch, rate):
    if rate <= 0.0:
        return None
    keep = 1.0 - rate
    return [(rng.random((batch, h)) < keep) / keep for h in arch.hidden]


def train(triples: Sequence[tuple[SparseFeatureVector, SparseFeatureVector]],
          arch: Architecture, cfg: TrainConfig,
          validation: Sequence[Sequence[SparseFeatureVector]],
          params: ModelParams | None = None,
          history: list | None = None) -> ModelParams:
    """Mini-batch SGD on the hinge objective with dropout and early stopping.

    ``triples`` are ``(features(x, y+), features(x, y-))`` pairs and each
    validation group lists the gold candidate's features first.  Returns
    the parameters of the epoch with the best validation P@1.
    """
    if not triples or not validation:
        raise NetError("training and validation sets must be non-empty")
    _check_dims(arch, [v for t in triples for v in t])
    seeds = np.random.SeedSequence(cfg.seed).spawn(3)
    init_rng, order_rng, drop_rng = (np.random.default_rng(s) for s in seeds)
    params = init_params(arch, int(init_rng.integers(2**32))) if params is None else params.copy()
    params.check(arch)

    def score(xs):
        return forward_batch(params, arch, xs)

    best = params.copy()
    best_p1 = group_p_at_1(score, validation)
    stale = 0
    n = len(triples)
    for epoch in range(1, cfg.max_epochs + 1):
        order = order_rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            pos = [triples[i][0] for i in idx]
            neg = [triples[i][1] for i in idx]
            masks = _masks(drop_rng, arch, 2 * len(idx), cfg.dropout)
            loss, grad = backward_batch(params, arch, pos, neg, cfg.margin, masks)
            total += loss
            sgd_step(params, grad, cfg.lr, cfg.l2, scale=1.0 / len(idx))
        p1 = group_p_at_1(score, validation)
        if history is not None:
            history.append(EpochRecord(epoch, total, p1))
        log.info("epoch %d: loss %.4f valid P@1 %.4f", epoch, total, p1)
        if p1 > best_p1:
            best, best_p1, stale = params.copy(), p1, 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    return best


def train_linear(triples, cfg: TrainConfig, validation, input_dim: int | None = None,
                 history: list | None = None) -> tuple[Architecture, ModelParams]:
    """The shallow ranker: one linear unit over the same features and loss."""
    if not triples:
        raise NetError("training and validation sets must be non-empty")
    dim = triples[0][0].dimension if input_dim is None else input_dim
    arch = linear_architecture(dim)
    return arch, train(triples, arch, cfg, validation, history=history)


# -------------------------------------------------------------- model file

def save_model(path, arch: Architecture, params: ModelParams, meta: dict | None = None) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "architecture": {
            "input_dim": arch.input_dim,
            "hidden": list(arch.hidden),
            "connectivity": arch.connectivity.tolist(),
        },
        "params": {
            "w1": params.w1.tolist(),
            "b1": params.b1.tolist(),
            "weights": [w.tolist() for w in params.weights],
            "biases": [b.tolist() for b in params.biases],
        },
        "meta": meta or {},
    }
    with open(path, "w", encoding="utf8", newline="\n") as f:
        json.dump(doc, f, separators=(",", ":"), sort_keys=True)
        f.write("\n")


def architecture_to_json(arch: Architecture) -> dict:
    return {"format": "treematch-architecture", "version": MODEL_VERSION,
            "input_dim": arch.input_dim, "hidden": list(arch.hidden),
            "connectivity": arch.connectivity.tolist()}


def architecture_from_json(doc: dict) -> Architecture:
    conn = np.array(doc["connectivity"], dtype=np.int64).reshape(doc["input_dim"], -1)
    return Architecture(int(doc["input_dim"]), tuple(doc["hidden"]), conn)


def load_model(path) -> tuple[Architecture, ModelParams, dict]:
    with open(path, encoding="utf8") as f:
        doc = json.load(f)
    if doc.get("format") != MODEL_FORMAT:
        raise NetError(f"{path}: not a {MODEL_FORMAT} file")
    if doc.get("version") != MODEL_VERSION:
        raise NetError(f"{path}: unsupported model version {doc.get('version')}")
    arch = architecture_from_json(doc["architecture"])
    p = doc["params"]
    params = ModelParams(
        np.array(p["w1"], dtype=np.float64).reshape(arch.connectivity.shape),
        np.array(p["b1"], dtype=np.float64),
        [np.array(w, dtype=np.float64) for w in p["weights"]],
        [np.array(b, dtype=np.float64) for b in p["biases"]],
    )
    params.check(arch)
    return arch, params, doc.get("meta", {})
