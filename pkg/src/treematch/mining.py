"""Discriminative mining of subtree-pair patterns.

Patterns grow from single-word pairs ``(1, 1)``.  Every grid cell ``(m, n)``
(``m`` nodes on the tweet side, ``n`` on the response side) is reached once,
breadth first: a cell is produced from its parent by adding one
tree-adjacent token to the surviving occurrences on one side, and the new
candidates are filtered by support and a smoothed positive ratio.

An occurrence is ``(pair_id, left_tokens, right_tokens)`` with both token
sets connected in their trees; every embedding is tracked so that support
counts are exact.
"""
from __future__ import annotations

import logging
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .abstraction import Clustering
from .patterns import (PatternStats, PatternTable, encode_nodes, encode_pair,
                       escape_word, sim_label, smoothed_score)
from .treebank import DepTree, PairedCorpus

log = logging.getLogger(__name__)

Occurrence = tuple  # (pair_id, tuple[int, ...], tuple[int, ...])
Key = tuple  # (left canonical, right canonical)


class MiningError(ValueError):
    pass


@dataclass
class MiningConfig:
    max_size: int = 4
    min_support_pos: int = 3
    tau: float = 0.6
    alpha: float = 1.0
    entity: bool = False
    simword: bool = False
    clustering: Clustering | None = None
    threads: int = 1

    def __post_init__(self):
        if self.max_size < 1:
            raise MiningError("max_size must be >= 1")
        if self.min_support_pos < 1:
            raise MiningError("min_support_pos must be >= 1")
        if self.alpha < 0:
            raise MiningError("alpha must be >= 0")
        if self.simword and self.clustering is None:
            raise MiningError("SimWord abstraction needs a clustering")


def growth_schedule(max_size: int) -> list[tuple[tuple[int, int], tuple[int, int] | None, str]]:
    """Cells in processing order as ``(cell, parent_cell, side)``.

    Mirrors the queue discipline: a cell is derived from whichever parent
    dequeues first; later parents skip it.
    """
    order = [((1, 1), None, "")]
    seen = {(1, 1)}
    queue = deque([(1, 1)])
    while queue:
        m, n = queue.popleft()
        for cell, side in (((m + 1, n), "left"), ((m, n + 1), "right")):
            if max(cell) <= max_size and cell not in seen:
                seen.add(cell)
                order.append((cell, (m, n), side))
                queue.append(cell)
    return order


class MiningContext:
    """Per-corpus lookups shared by the growth steps."""

    def __init__(self, corpus: PairedCorpus, config: MiningConfig):
        self.config = config
        self.pairs = [(corpus.trees[p.x], corpus.trees[p.y]) for p in corpus.pairs]
        self.labels = corpus.labels()
        self._word_cache: dict = {}

    def cluster_of(self, tree: DepTree, v: int):
        tok = tree.token(v)
        if self.config.clustering is not None:
            return self.config.clustering.get(tok.form)
        return tok.cluster

    def concrete_side(self, tree: DepTree, nodes: tuple[int, ...]) -> str:
        ck = (id(tree), nodes)
        s = self._word_cache.get(ck)
        if s is None:
            s = encode_nodes(tree, nodes, {v: escape_word(tree.form(v)) for v in nodes})
            self._word_cache[ck] = s
        return s

    def keys(self, occ: Occurrence) -> list[Key]:
        pid, lx, ry = occ
        tx, ty = self.pairs[pid]
        concrete = (self.concrete_side(tx, lx), self.concrete_side(ty, ry))
        cfg = self.config
        if not (cfg.entity or cfg.simword):
            return [concrete]
        abstract = abstract_key(tx, lx, ty, ry, cfg.entity, cfg.simword, self.cluster_of)
        if abstract is None or abstract == concrete:
            return [concrete]
        return [concrete, abstract]


def abstract_key(tx, lx, ty, ry, entity: bool, simword: bool, cluster_of) -> Key | None:
    """Maximally abstracted key of one occurrence, or None if no rule fires.

    Entity tags present on both sides become shared wildcard slots; among
    the remaining nodes, clusters present on both sides become ``~k``.
    """
    lab_x = {v: escape_word(tx.form(v)) for v in lx}
    lab_y = {v: escape_word(ty.form(v)) for v in ry}
    fired = False
    if entity:
        tags_x = {tx.token(v).ne_tag for v in lx} - {""}
        shared = tags_x & ({ty.token(v).ne_tag for v in ry} - {""})
        if shared:
            fired = True
            group = {t: i for i, t in enumerate(sorted(shared))}
            for tree, nodes, lab in ((tx, lx, lab_x), (ty, ry, lab_y)):
                for v in nodes:
                    tag = tree.token(v).ne_tag
                    if tag in group:
                        lab[v] = group[tag]
    if simword:
        cx = {v: cluster_of(tx, v) for v in lx if isinstance(lab_x[v], str)}
        cy = {v: cluster_of(ty, v) for v in ry if isinstance(lab_y[v], str)}
        shared_c = ({c for c in cx.values() if c is not None}
                    & {c for c in cy.values() if c is not None})
        if shared_c:
            fired = True
            for cmap, lab in ((cx, lab_x), (cy, lab_y)):
                for v, c in cmap.items():
                    if c in shared_c:
                        lab[v] = sim_label(c)
    if not fired:
        return None
    return encode_pair(tx, lx, lab_x, ty, ry, lab_y)


# ------------------------------------------------------------ growth steps

def _extend(occs: Iterable[Occurrence], ctx: MiningContext, side: int) -> dict[Key, list]:
    new: set = set()
    for occ in occs:
        pid = occ[0]
        nodes = occ[side]
        tree = ctx.pairs[pid][side - 1]
        present = set(nodes)
        for v in nodes:
            for u in tree.neighbours(v):
                if u not in present:
                    grown = tuple(sorted(nodes + (u,)))
                    new.add((pid, grown, occ[2]) if side == 1 else (pid, occ[1], grown))
    out: dict[Key, list] = {}
    for occ in new:
        k = (ctx.concrete_side(ctx.pairs[occ[0]][0], occ[1]),
             ctx.concrete_side(ctx.pairs[occ[0]][1], occ[2]))
        out.setdefault(k, []).append(occ)
    return out


def left_extend(occs: Iterable[Occurrence], ctx: MiningContext) -> dict[Key, list]:
    """Grow every occurrence by one tweet-side token adjacent to its image.

    Returns concrete candidate keys mapped to their (deduplicated) occurrences.
    """
    return _extend(occs, ctx, 1)


def right_extend(occs: Iterable[Occurrence], ctx: MiningContext) -> dict[Key, list]:
    """Response-side mirror of :func:`left_extend`."""
    return _extend(occs, ctx, 2)


def wildcard_group(candidates: dict[Key, list], ctx: MiningContext) -> dict[Key, list]:
    """Add abstracted keys, each collecting the occurrences of every concrete
    pattern it generalises.  Concrete keys are kept unchanged."""
    cfg = ctx.config
    if not (cfg.entity or cfg.simword):
        return candidates
    out = {k: list(v) for k, v in candidates.items()}
    for occs in candidates.values():
        for occ in occs:
            pid, lx, ry = occ
            tx, ty = ctx.pairs[pid]
            ak = abstract_key(tx, lx, ty, ry, cfg.entity, cfg.simword, ctx.cluster_of)
            if ak is not None:
                out.setdefault(ak, []).append(occ)
    return out


def support(occs: Iterable[Occurrence], labels: np.ndarray) -> tuple[int, int]:
    pids = {o[0] for o in occs}
    pos = sum(1 for p in pids if labels[p])
    return pos, len(pids) - pos


def discriminative_filter(candidates: dict[Key, list], labels: np.ndarray, alpha: float,
                          tau: float, min_support_pos: int) -> dict[Key, PatternStats]:
    """Per-pair support counting; keep patterns with enough positive support
    and a smoothed positive ratio of at least ``tau``."""
    kept = {}
    for key, occs in candidates.items():
        pos, neg = support(occs, labels)
        if pos < min_support_pos:
            continue
        score = smoothed_score(pos, neg, alpha)
        if score >= tau:
            kept[key] = PatternStats(pos, neg, score)
    return kept


# ------------------------------------------------------------------ driver

def _initial(ctx: MiningContext, pids: range) -> dict[Key, list]:
    out: dict[Key, list] = {}
    for pid in pids:
        tx, ty = ctx.pairs[pid]
        for i in range(1, len(tx) + 1):
            li = ctx.concrete_side(tx, (i,))
            for j in range(1, len(ty) + 1):
                out.setdefault((li, ctx.concrete_side(ty, (j,))), []).append((pid, (i,), (j,)))
    return out


def _merge(parts: list[dict[Key, list]]) -> dict[Key, list]:
    if len(parts) == 1:
        return parts[0]
    out: dict[Key, list] = {}
    for part in parts:
        for k, v in part.items():
            out.setdefault(k, []).extend(v)
    return out


def _shards(n: int, k: int) -> list[range]:
    k = max(1, min(k, n)) if n else 1
    bounds = np.linspace(0, n, k + 1).astype(int)
    return [range(bounds[i], bounds[i + 1]) for i in range(k)]


@dataclass
class MiningResult:
    table: PatternTable
    cells: list[tuple[int, int]] = field(default_factory=list)
    candidates_per_cell: dict = field(default_factory=dict)


def mine(corpus: PairedCorpus, config: MiningConfig | None = None, *,
         return_result: bool = False):
    """Mine a :class:`PatternTable` from a labelled corpus.

    Table indices follow the cell processing order, and within a cell the
    sorted pattern keys, so the table is independent of ``threads``.
    """
    config = config or MiningConfig()
    if len(corpus) == 0:
        raise MiningError("empty corpus")
    if not corpus.labels().any():
        raise MiningError("corpus has no positive pairs")
    ctx = MiningContext(corpus, config)
    n_pairs = len(corpus)
    shards = _shards(n_pairs, config.threads)
    pool = ThreadPoolExecutor(config.threads) if config.threads > 1 else None

    def run(fn, items):
        if pool is None:
            return [fn(x) for x in items]
        return list(pool.map(fn, items))

    def step(candidates):
        grouped = wildcard_group(candidates, ctx)
        kept = discriminative_filter(grouped, ctx.labels, config.alpha, config.tau,
                                     config.min_support_pos)
        surviving = set()
        for key in kept:
            surviving.update(grouped[key])
        occ_sorted = sorted(surviving)
        return kept, occ_sorted, len(grouped)

    keys: list[Key] = []
    stats: list[PatternStats] = []
    occurrences: dict[tuple[int, int], list] = {}
    result = MiningResult(PatternTable())
    try:
        for cell, parent, side in growth_schedule(config.max_size):
            if parent is None:
                cands = _merge(run(lambda r: _initial(ctx, r), shards))
            else:
                base = occurrences[parent]
                if not base:
                    occurrences[cell] = []
                    result.cells.append(cell)
                    result.candidates_per_cell[cell] = 0
                    continue
                parts = [[o for o in base if o[0] in r] for r in shards]
                fn = left_extend if side == "left" else right_extend
                cands = _merge(run(lambda part: fn(part, ctx), parts))
            kept, occ_sorted, n_cand = step(cands)
            occurrences[cell] = occ_sorted
            for key in sorted(kept):
                keys.append(key)
                stats.append(kept[key])
            result.cells.append(cell)
            result.candidates_per_cell[cell] = n_cand
            log.info("cell %s: %d candidates, %d kept, %d occurrences",
                     cell, n_cand, len(kept), len(occ_sorted))
    finally:
        if pool is not None:
            pool.shutdown()
    result.table = PatternTable(keys, stats)
    return result if return_result else result.table
