"""Binary featurisation of a tree pair against a frozen pattern table.

A pattern applies to ``(tx, ty)`` when its left shape embeds in ``tx`` and
its right shape in ``ty``: injective, head->dependent preserving, with word
nodes matching the surface form, ``~k`` nodes any word of cluster ``k`` and
``$k`` nodes any entity-tagged token.  All nodes of one slot bind to the
same entity tag and distinct slots to distinct tags.
"""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .abstraction import Clustering
from .patterns import (PatternTable, SubtreeShape, TreePairPattern, encode_nodes,
                       encode_pair, escape_word, label_kind, sim_label, unescape_word)
from .treebank import DepTree

ANY_ENTITY = "$"  # bare "$" never occurs as an escaped word or a numbered slot


@dataclass(frozen=True)
class SparseFeatureVector:
    active: np.ndarray  # strictly increasing int64 indices
    dimension: int

    def __post_init__(self):
        act = np.asarray(self.active, dtype=np.int64)
        if act.ndim != 1:
            raise ValueError("active must be 1-d")
        if act.size and (act[0] < 0 or act[-1] >= self.dimension or np.any(np.diff(act) <= 0)):
            raise ValueError("active indices must be sorted, unique and < dimension")
        object.__setattr__(self, "active", act)

    def __len__(self):
        return int(self.active.size)

    def __eq__(self, other):
        return (isinstance(other, SparseFeatureVector) and self.dimension == other.dimension
                and np.array_equal(self.active, other.active))

    def __hash__(self):
        return hash((self.dimension, self.active.tobytes()))


def _cluster(tree: DepTree, v: int, clustering: Clustering | None):
    if clustering is not None:
        return clustering.get(tree.form(v))
    return tree.token(v).cluster


# ------------------------------------------------------ direct embedding test

def _embeddings(shape: SubtreeShape, tree: DepTree, clustering, binding: dict) -> Iterator[dict]:
    """Yield slot bindings (slot label -> entity tag) extending ``binding``
    for every embedding of ``shape`` into ``tree``."""
    kids = shape.children()

    def fits(node, tok, bind):
        lab = shape.labels[node]
        kind = label_kind(lab)
        if kind == "word":
            return bind if tree.form(tok) == unescape_word(lab) else None
        if kind == "sim":
            return bind if _cluster(tree, tok, clustering) == int(lab[1:]) else None
        tag = tree.token(tok).ne_tag
        if not tag:
            return None
        bound = bind.get(lab)
        if bound is not None:
            return bind if bound == tag else None
        if tag in bind.values():
            return None
        out = dict(bind)
        out[lab] = tag
        return out

    def place(node, tok, bind):
        bind = fits(node, tok, bind)
        if bind is None:
            return
        yield from place_children(kids[node], 0, tree.children[tok], frozenset(), bind)

    def place_children(pkids, i, tkids, used, bind):
        if i == len(pkids):
            yield bind
            return
        for t in tkids:
            if t in used:
                continue
            for b in place(pkids[i], t, bind):
                yield from place_children(pkids, i + 1, tkids, used | {t}, b)

    for tok in range(1, len(tree) + 1):
        yield from place(shape.root, tok, binding)


def pattern_matches(p: TreePairPattern, tx: DepTree, ty: DepTree,
                    clustering: Clustering | None = None) -> bool:
    seen = set()
    for bind in _embeddings(p.left, tx, clustering, {}):
        frozen = tuple(sorted(bind.items()))
        if frozen in seen:
            continue
        seen.add(frozen)
        for _ in _embeddings(p.right, ty, clustering, bind):
            return True
    return False


def brute_force_featurize(tx, ty, table: PatternTable, clustering=None) -> SparseFeatureVector:
    act = [i for i in range(len(table)) if pattern_matches(table.pattern(i), tx, ty, clustering)]
    return SparseFeatureVector(np.array(act, dtype=np.int64), table.dimension)


# -------------------------------------------------------- lattice featuriser

def _relaxed(label: str) -> str:
    return ANY_ENTITY if label_kind(label) == "slot" else label


def _rooted_subsets(kids: Sequence[Sequence[int]], node: int) -> list[frozenset]:
    """All connected node sets of a shape that contain ``node`` and are
    closed under taking parents (within the subtree rooted at ``node``)."""
    options = [frozenset([node])]
    for c in kids[node]:
        sub = _rooted_subsets(kids, c)
        options = options + [o | s for o in options for s in sub]
    return options


def _encode_subset(shape: SubtreeShape, keep: frozenset) -> str:
    kids = shape.children()

    def enc(v):
        sub = sorted(enc(c) for c in kids[v] if c in keep)
        lab = _relaxed(shape.labels[v])
        if not sub:
            return lab
        if len(sub) == 1:
            return f"{lab}->{sub[0]}"
        return f"{lab}->({','.join(sub)})"

    return enc(shape.root)


class Featurizer:
    """Featurises tree pairs by growing matched sub-patterns bottom-up.

    Occurrences are grown one tree-adjacent token at a time and kept only
    while some relaxed labelling of them (wildcards read as "any entity")
    is a rooted sub-pattern of a table entry, so the work done scales with
    what matches rather than with the table size.
    """

    def __init__(self, table: PatternTable, clustering: Clustering | None = None):
        self.table = table
        self.clustering = clustering
        self.max_left = self.max_right = 0
        self.uses_slots = self.uses_sim = False
        prefixes: set[tuple[str, str]] = set()
        for key in table.keys:
            p = TreePairPattern.from_key(key)
            self.max_left = max(self.max_left, len(p.left))
            self.max_right = max(self.max_right, len(p.right))
            for lab in p.left.labels + p.right.labels:
                kind = label_kind(lab)
                self.uses_slots |= kind == "slot"
                self.uses_sim |= kind == "sim"
            lsubs = [_encode_subset(p.left, s) for s in _rooted_subsets(p.left.children(), p.left.root)]
            rsubs = [_encode_subset(p.right, s) for s in _rooted_subsets(p.right.children(), p.right.root)]
            prefixes.update(itertools.product(lsubs, rsubs))
        self.prefixes = prefixes

    def _options(self, tree: DepTree, v: int) -> list:
        """Relaxed labels a token can take: word, ``~k`` and/or any-entity."""
        opts = [escape_word(tree.form(v))]
        if self.uses_sim:
            c = _cluster(tree, v, self.clustering)
            if c is not None:
                opts.append(sim_label(c))
        if self.uses_slots and tree.token(v).ne_tag:
            opts.append(ANY_ENTITY)
        return opts

    def _relaxed_keys(self, tx, lx, ty, ry, opts_x, opts_y):
        choices = [opts_x[v] for v in lx] + [opts_y[v] for v in ry]
        nl = len(lx)
        for combo in itertools.product(*choices):
            labx = dict(zip(lx, combo[:nl]))
            laby = dict(zip(ry, combo[nl:]))
            yield combo, (encode_nodes(tx, lx, labx), encode_nodes(ty, ry, laby))

    def _full_keys(self, tx, lx, ty, ry, combos):
        for combo in combos:
            labx = dict(zip(lx, combo[:len(lx)]))
            laby = dict(zip(ry, combo[len(lx):]))
            if ANY_ENTITY in combo:
                for lab, tree in ((labx, tx), (laby, ty)):
                    for v, l in lab.items():
                        if l == ANY_ENTITY:
                            lab[v] = tree.token(v).ne_tag
                gx = {l for v, l in labx.items() if combo[lx.index(v)] == ANY_ENTITY}
                gy = {l for v, l in laby.items() if combo[len(lx) + ry.index(v)] == ANY_ENTITY}
                tag_id = {t: i for i, t in enumerate(sorted(gx | gy))}
                for lab, nodes, off in ((labx, lx, 0), (laby, ry, len(lx))):
                    for j, v in enumerate(nodes):
                        if combo[off + j] == ANY_ENTITY:
                            lab[v] = tag_id[lab[v]]
            yield encode_pair(tx, lx, labx, ty, ry, laby)

    def featurize(self, tx: DepTree, ty: DepTree) -> SparseFeatureVector:
        table = self.table
        if not len(table):
            return SparseFeatureVector(np.zeros(0, dtype=np.int64), 0)
        opts_x = {v: self._options(tx, v) for v in range(1, len(tx) + 1)}
        opts_y = {v: self._options(ty, v) for v in range(1, len(ty) + 1)}
        active: set[int] = set()
        frontier = [((i,), (j,)) for i in range(1, len(tx) + 1) for j in range(1, len(ty) + 1)]
        seen = set(frontier)
        index = table.index
        while frontier:
            nxt = []
            for lx, ry in frontier:
                combos = [c for c, rk in self._relaxed_keys(tx, lx, ty, ry, opts_x, opts_y)
                          if rk in self.prefixes]
                if not combos:
                    continue
                for key in self._full_keys(tx, lx, ty, ry, combos):
                    i = index.get(key)
                    if i is not None:
                        active.add(i)
                for side, nodes, tree, limit in ((0, lx, tx, self.max_left),
                                                 (1, ry, ty, self.max_right)):
                    if len(nodes) >= limit:
                        continue
                    present = set(nodes)
                    for v in nodes:
                        for u in tree.neighbours(v):
                            if u in present:
                                continue
                            grown = tuple(sorted(nodes + (u,)))
                            occ = (grown, ry) if side == 0 else (lx, grown)
                            if occ not in seen:
                                seen.add(occ)
                                nxt.append(occ)
            frontier = nxt
        return SparseFeatureVector(np.array(sorted(active), dtype=np.int64), table.dimension)


def featurize(tx: DepTree, ty: DepTree, table: PatternTable,
              clustering: Clustering | None = None) -> SparseFeatureVector:
    return Featurizer(table, clustering).featurize(tx, ty)


def featurize_pairs(pairs, table: PatternTable, clustering: Clustering | None = None,
                    threads: int = 1) -> list[SparseFeatureVector]:
    """Featurise ``(tx, ty)`` pairs; output order follows input order."""
    fz = Featurizer(table, clustering)
    pairs = list(pairs)
    if threads <= 1:
        return [fz.featurize(tx, ty) for tx, ty in pairs]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(lambda p: fz.featurize(*p), pairs))


# ------------------------------------------------------------------ file I/O

def pair_id(x: str, y: str, label: str) -> str:
    for part in (x, y):
        if "|" in part or any(c.isspace() for c in part):
            raise ValueError(f"tree id {part!r} cannot be written to a feature file")
    return f"{x}|{y}|{label}"


def write_features(path, ids: Sequence[str], vectors: Sequence[SparseFeatureVector],
                   dimension: int) -> None:
    """``pair_id<TAB>space-separated active indices`` after a ``#dimension=``
    header line."""
    with open(path, "w", encoding="utf8", newline="\n") as f:
        f.write(f"#dimension={dimension}\n")
        for pid, v in zip(ids, vectors):
            f.write(f"{pid}\t{' '.join(str(int(i)) for i in v.active)}\n")


def read_features(path) -> tuple[list[str], list[SparseFeatureVector], int]:
    ids, vecs, dim = [], [], None
    with open(path, encoding="utf8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            if line.startswith("#dimension="):
                dim = int(line.split("=", 1)[1])
                continue
            if dim is None:
                raise ValueError(f"{path}:{lineno}: missing #dimension header")
            cols = line.split("\t")
            if len(cols) != 2:
                raise ValueError(f"{path}:{lineno}: expected pair_id<TAB>indices")
            act = np.array([int(t) for t in cols[1].split()], dtype=np.int64)
            ids.append(cols[0])
            vecs.append(SparseFeatureVector(act, dim))
    if dim is None:
        raise ValueError(f"{path}: missing #dimension header")
    return ids, vecs, dim
