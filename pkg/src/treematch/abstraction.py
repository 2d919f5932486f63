"""Word clustering and the two vertex abstraction rules.

Two tokens, one from each side of a text pair, collapse to ``SameEntity``
when both carry the same named-entity tag, or to ``SimWord_k`` when both
words fall in word cluster ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

SAME_ENTITY = "SameEntity"


class AbstractionError(ValueError):
    pass


@dataclass(frozen=True)
class EmbeddingTable:
    words: tuple[str, ...]
    vectors: np.ndarray  # (n_words, d), float64

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.ndim != 2 or vec.shape[0] != len(self.words):
            raise AbstractionError("vectors must be (n_words, d)")
        if vec.shape[1] < 1:
            raise AbstractionError("embedding dimension must be >= 1")
        object.__setattr__(self, "words", tuple(self.words))
        object.__setattr__(self, "vectors", vec)

    @classmethod
    def from_dict(cls, emb: Mapping[str, "np.ndarray | list[float]"]) -> "EmbeddingTable":
        words = list(emb)
        dims = {len(emb[w]) for w in words}
        if len(dims) > 1:
            raise AbstractionError(f"mixed embedding dimensions {sorted(dims)}")
        if not words:
            return cls((), np.zeros((0, 1)))
        return cls(tuple(words), np.array([emb[w] for w in words], dtype=np.float64))

    def __len__(self):
        return len(self.words)


@dataclass(frozen=True)
class Clustering:
    assignment: dict[str, int]
    k: int
    centroids: np.ndarray  # (k, d)

    def __post_init__(self):
        for w, c in self.assignment.items():
            if not 0 <= c < self.k:
                raise AbstractionError(f"cluster id {c} of {w!r} outside 0..{self.k - 1}")

    def get(self, word: str) -> int | None:
        return self.assignment.get(word)

    def __contains__(self, word):
        return word in self.assignment


def _objective(x, centroids, labels):
    return float(((x - centroids[labels]) ** 2).sum())


def _assign(x, centroids):
    d2 = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1), d2


def kmeans_cluster(emb: EmbeddingTable, k: int, max_iters: int = 100, seed: int = 0,
                   return_history: bool = False):
    """Lloyd's k-means with k-means++ seeding.

    Empty clusters are re-seeded with the point farthest from its current
    centroid.  With ``return_history`` the per-iteration objective values
    are returned as well.
    """
    n = len(emb)
    if n == 0:
        raise AbstractionError("empty embedding table")
    if not 1 <= k <= n:
        raise AbstractionError(f"K={k} must lie in 1..{n} (vocabulary size)")
    if max_iters < 1:
        raise AbstractionError("max_iters must be >= 1")
    x = emb.vectors
    rng = np.random.default_rng(seed)

    centroids = np.empty((k, x.shape[1]))
    first = rng.integers(n)
    centroids[0] = x[first]
    closest = ((x - x[first]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centroids[j] = x[idx]
        closest = np.minimum(closest, ((x - x[idx]) ** 2).sum(axis=1))

    labels, d2 = _assign(x, centroids)
    history = [_objective(x, centroids, labels)]
    for _ in range(max_iters):
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
        # re-seed empties with the currently worst-served point
        for j in range(k):
            if not (labels == j).any():
                far = int(((x - centroids[labels]) ** 2).sum(axis=1).argmax())
                centroids[j] = x[far]
                labels[far] = j
        new_labels, d2 = _assign(x, centroids)
        # keep the old assignment on exact ties so the objective cannot rise
        same = d2[np.arange(n), labels] <= d2[np.arange(n), new_labels]
        new_labels = np.where(same, labels, new_labels)
        changed = not np.array_equal(new_labels, labels)
        labels = new_labels
        history.append(_objective(x, centroids, labels))
        if not changed:
            break
    for j in range(k):
        members = labels == j
        if members.any():
            centroids[j] = x[members].mean(axis=0)
    history.append(_objective(x, centroids, labels))
    result = Clustering({w: int(c) for w, c in zip(emb.words, labels)}, k, centroids)
    if return_history:
        return result, history
    return result


def abstract_vertex(wx: str, wy: str, tag_x: str = "", tag_y: str = "",
                    clustering: Clustering | None = None):
    """Label of the product vertex ``(wx, wy)``.

    Returns ``SAME_ENTITY`` when both tokens carry the same non-empty entity
    tag, ``"SimWord_k"`` when both words sit in cluster ``k``, and the
    concrete pair ``(wx, wy)`` otherwise.
    """
    if tag_x and tag_x == tag_y:
        return SAME_ENTITY
    if clustering is not None:
        cx = clustering.get(wx)
        if cx is not None and cx == clustering.get(wy):
            return f"SimWord_{cx}"
    return (wx, wy)


def read_embeddings(path) -> EmbeddingTable:
    words, vecs = [], []
    with open(path, encoding="utf8") as f:
        for lineno, line in enumerate(f, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) < 2:
                raise AbstractionError(f"{path}:{lineno}: word without vector")
            try:
                vecs.append([float(v) for v in parts[1:]])
            except ValueError:
                raise AbstractionError(f"{path}:{lineno}: non-numeric component") from None
            words.append(parts[0])
    if len({len(v) for v in vecs}) > 1:
        raise AbstractionError(f"{path}: vectors of differing dimension")
    if not words:
        raise AbstractionError(f"{path}: no embeddings")
    return EmbeddingTable(tuple(words), np.array(vecs))


def write_clusters(path, clustering: Clustering) -> None:
    with open(path, "w", encoding="utf8", newline="\n") as f:
        for w in sorted(clustering.assignment):
            f.write(f"{w}\t{clustering.assignment[w]}\n")


def read_clusters(path) -> Clustering:
    """Load a ``word<TAB>cluster_id`` file.  Centroids are not stored; the
    returned clustering carries an empty ``(k, 0)`` centroid array."""
    assignment = {}
    with open(path, encoding="utf8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise AbstractionError(f"{path}:{lineno}: expected word<TAB>cluster_id")
            try:
                assignment[cols[0]] = int(cols[1])
            except ValueError:
                raise AbstractionError(f"{path}:{lineno}: cluster id must be an integer") from None
    k = max(assignment.values(), default=-1) + 1
    return Clustering(assignment, k, np.zeros((k, 0)))
