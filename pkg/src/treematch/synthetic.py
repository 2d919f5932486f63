"""Synthetic (tweet, response) corpora with planted matching patterns.

Three flavours share one generator:

``plain``
    Every positive pair carries the two halves of one gold subtree pair;
    negatives pair a tweet with responses planted for a different gold.
``conjunctive``
    Per topic, a tweet word ``a`` and a response hub ``r`` with two marker
    words ``m`` and ``n`` that are always present.  A gold response has
    exactly one marker attached under ``r``; its topical hard negative has
    both or neither.  Which response matches is an exclusive-or of two
    deep features, so no linear weighting of the mined patterns ranks every
    group correctly, and single words carry no signal at all.
``entity``
    Tweets ``a -> E`` and responses ``r -> E`` share an entity ``E``; the
    hard negative mentions a different entity.  Entities of held-out pairs
    never occur in the training part.

Hard negatives (``conjunctive``/``entity``) are extra response trees paired
with a fraction ``hard_fraction`` of the tweets; the rest of a tweet's
negatives are responses of other topics.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .patterns import SubtreeShape, TreePairPattern, escape_word, slot_label
from .treebank import NEG, POS, DepTree, Pair, Token


@dataclass
class SyntheticSpec:
    n_patterns: int = 20
    n_pairs: int = 2000
    vocab_size: int = 500
    tree_min: int = 4
    tree_max: int = 8
    n_neg: int = 9
    conjunctive: bool = False
    entity: bool = False
    hard_fraction: float = 0.5
    holdout: float = 0.2
    n_entities: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.conjunctive and self.entity:
            raise ValueError("conjunctive and entity modes are exclusive")
        if self.tree_min < 3 or self.tree_max < self.tree_min:
            raise ValueError("tree sizes must satisfy 3 <= tree_min <= tree_max")
        if self.n_pairs < 0 or self.n_patterns < 1 or self.n_neg < 0:
            raise ValueError("bad corpus sizes")
        if not 0.0 <= self.hard_fraction <= 1.0 or not 0.0 <= self.holdout < 1.0:
            raise ValueError("fractions must lie in [0, 1]")

    @property
    def mode(self) -> str:
        return "conjunctive" if self.conjunctive else "entity" if self.entity else "plain"

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticCorpus:
    trees: dict[str, DepTree]
    pairs: list[Pair]             # positives first, then negatives grouped by tweet
    gold: list[TreePairPattern]
    test_tweets: set[str] = field(default_factory=set)
    pattern_of: dict[str, int] = field(default_factory=dict)  # tweet id -> gold/topic id

    def negatives_of(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for p in self.pairs:
            if not p.positive:
                out.setdefault(p.x, []).append(p.y)
        return out


def _random_shape(rng, size: int) -> list[int]:
    return [-1] + [int(rng.integers(i)) for i in range(1, size)]


def _to_tree(rng, sid: str, words: list[str], parents: list[int], tags: list[str]) -> DepTree:
    n = len(words)
    perm = rng.permutation(n)  # node -> sentence position
    tokens = [None] * n
    for node in range(n):
        head = 0 if parents[node] < 0 else int(perm[parents[node]]) + 1
        tokens[perm[node]] = Token(int(perm[node]) + 1, words[node], head, tags[node])
    return DepTree(tokens, sid)


class _Builder:
    def __init__(self, spec: SyntheticSpec, rng):
        self.spec, self.rng = spec, rng
        self.vocab = [f"w{i:03d}" for i in range(spec.vocab_size)]

    def filler(self, exclude=()):
        while True:
            w = self.vocab[int(self.rng.integers(len(self.vocab)))]
            if w not in exclude:
                return w

    def tree(self, sid, words, parents, tags=None, exclude=(), size=None, pin=()):
        """Grow a planted fragment to a random size with filler tokens.

        Nodes in ``pin`` receive no filler children."""
        rng = self.rng
        words, parents = list(words), list(parents)
        tags = list(tags) if tags is not None else [""] * len(words)
        if size is None:
            size = int(rng.integers(self.spec.tree_min, self.spec.tree_max + 1))
        size = max(size, len(words))
        hosts = [i for i in range(len(words)) if i not in pin]
        while len(words) < size:
            if hosts:
                parent = hosts[int(rng.integers(len(hosts)))]
            else:
                parent = int(rng.integers(len(words)))
            parents.append(parent)
            words.append(self.filler(exclude))
            tags.append("")
            hosts.append(len(words) - 1)
        return _to_tree(rng, sid, words, parents, tags)


def _pick_negatives(rng, tweet_topic: int, pool: list[tuple[str, int]], k: int) -> list[str]:
    cands = [r for r, t in pool if t != tweet_topic]
    if k > len(cands):
        raise ValueError("not enough foreign responses for the requested negatives")
    idx = rng.choice(len(cands), size=k, replace=False)
    return [cands[i] for i in sorted(idx)]


def make_synthetic(spec: SyntheticSpec) -> SyntheticCorpus:
    rng = np.random.default_rng(spec.seed)
    b = _Builder(spec, rng)
    if spec.mode == "plain":
        return _plain(spec, rng, b)
    return _topical(spec, rng, b)


def _plain(spec, rng, b: _Builder) -> SyntheticCorpus:
    n_gold_words = sum(2 * 3 for _ in range(spec.n_patterns))
    words = list(rng.permutation(b.vocab)[:n_gold_words])
    gold, halves = [], []
    for g in range(spec.n_patterns):
        sides = []
        for _ in range(2):
            size = int(rng.integers(2, 4))
            ws = [str(words.pop()) for _ in range(size)]
            sides.append((ws, _random_shape(rng, size)))
        halves.append(sides)
        gold.append(TreePairPattern(SubtreeShape([escape_word(w) for w in sides[0][0]], sides[0][1]),
                                    SubtreeShape([escape_word(w) for w in sides[1][0]], sides[1][1])))
    trees, pos, topic = {}, [], {}
    for i in range(spec.n_pairs):
        g = int(rng.integers(spec.n_patterns))
        (lw, lp), (rw, rp) = halves[g]
        x, y = f"t{i:05d}", f"r{i:05d}"
        trees[x] = b.tree(x, lw, lp)
        trees[y] = b.tree(y, rw, rp)
        pos.append(Pair(x, y, POS))
        topic[x] = g
    pool = [(p.y, topic[p.x]) for p in pos]
    negs = []
    if spec.n_neg:
        for p in pos:
            negs.extend(Pair(p.x, y, NEG) for y in _pick_negatives(rng, topic[p.x], pool, spec.n_neg))
    n_test = int(round(spec.holdout * len(pos)))
    test = {p.x for p in pos[len(pos) - n_test:]} if n_test else set()
    return SyntheticCorpus(trees, pos + negs, gold, test, topic)


def _topical(spec, rng, b: _Builder) -> SyntheticCorpus:
    n_topics = spec.n_patterns
    lex = list(rng.permutation(b.vocab))
    topics = [{"a": str(lex.pop()), "r": str(lex.pop()), "m": str(lex.pop()), "n": str(lex.pop())}
              for _ in range(n_topics)]
    reserved = {w for t in topics for w in t.values()}
    n_test = int(round(spec.holdout * spec.n_pairs))
    ents = [f"E{i:03d}" for i in range(spec.n_entities)]
    n_test_ents = max(2, int(round(spec.holdout * len(ents))))
    train_ents, test_ents = ents[:-n_test_ents], ents[-n_test_ents:]

    gold = []
    for t in topics:
        a, r = escape_word(t["a"]), escape_word(t["r"])
        if spec.conjunctive:
            for marker in ("m", "n"):
                gold.append(TreePairPattern(SubtreeShape([a], [-1]),
                                            SubtreeShape([r, escape_word(t[marker])], [-1, 0])))
        else:
            s = slot_label(0)
            gold.append(TreePairPattern(SubtreeShape([a, s], [-1, 0]), SubtreeShape([r, s], [-1, 0])))

    def response(sid, t, kind, ent=None):
        tw = topics[t]
        if spec.conjunctive:
            # r at node 0 and a filler host at node 1; markers under r or the host
            words, parents = [tw["r"], b.filler(reserved)], [-1, 0]
            for marker in ("m", "n"):
                under_r = kind == "both" or kind == marker
                words.append(tw[marker])
                parents.append(0 if under_r else 1)
            return b.tree(sid, words, parents, exclude=reserved, pin={0}
                          if kind == "both" else set())
        return b.tree(sid, [tw["r"], ent], [-1, 0], ["", ent], exclude=reserved)

    trees, pos, topic, hard = {}, [], {}, {}
    for i in range(spec.n_pairs):
        t = int(rng.integers(n_topics))
        x, y = f"t{i:05d}", f"r{i:05d}"
        is_test = i >= spec.n_pairs - n_test
        if spec.conjunctive:
            kind = ("m", "n")[int(rng.integers(2))]
            trees[x] = b.tree(x, [topics[t]["a"]], [-1], exclude=reserved)
            trees[y] = response(y, t, kind)
            hard_kind = ("both", "neither")[int(rng.integers(2))]
            hard_args = (hard_kind,)
        else:
            pool = test_ents if is_test else train_ents
            e, e2 = (str(v) for v in rng.choice(pool, size=2, replace=False))
            trees[x] = b.tree(x, [topics[t]["a"], e], [-1, 0], ["", e], exclude=reserved)
            trees[y] = response(y, t, None, e)
            hard_args = (None, e2)
        if rng.random() < spec.hard_fraction:
            h = f"h{i:05d}"
            trees[h] = response(h, t, *hard_args)
            hard[x] = h
        pos.append(Pair(x, y, POS))
        topic[x] = t
    pool = [(p.y, topic[p.x]) for p in pos]
    negs = []
    for p in pos:
        k = spec.n_neg
        if p.x in hard and k:
            negs.append(Pair(p.x, hard[p.x], NEG))
            k -= 1
        if k:
            negs.extend(Pair(p.x, y, NEG) for y in _pick_negatives(rng, topic[p.x], pool, k))
    test = {p.x for p in pos[len(pos) - n_test:]} if n_test else set()
    return SyntheticCorpus(trees, pos + negs, gold, test, topic)
