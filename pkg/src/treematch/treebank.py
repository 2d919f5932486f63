"""Read, validate and write dependency-parsed sentences and paired corpora.

Trees come in a small CoNLL-like TSV dialect: one token per line with the
columns ``index``, ``form``, ``head`` and an optional ``ne_tag``; sentences
are separated by blank lines and may carry an ``#id=<name>`` comment.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Sequence, TextIO

import numpy as np

POS, NEG = "pos", "neg"


class TreebankError(ValueError):
    """Raised for malformed trees, pair files or corpora."""


@dataclass(frozen=True)
class Token:
    index: int
    form: str
    head: int
    ne_tag: str = ""
    cluster: int | None = None


@dataclass(frozen=True)
class DepTree:
    """A validated dependency tree; ``tokens[i].index == i + 1``."""

    tokens: tuple[Token, ...]
    sentence_id: str = ""
    # derived adjacency, filled in __post_init__
    children: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)
    root: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        root = _validate(self.tokens, self.sentence_id)
        kids: list[list[int]] = [[] for _ in range(len(self.tokens) + 1)]
        for tok in self.tokens:
            kids[tok.head].append(tok.index)
        object.__setattr__(self, "children", tuple(tuple(k) for k in kids))
        object.__setattr__(self, "root", root)

    def __len__(self) -> int:
        return len(self.tokens)

    def token(self, index: int) -> Token:
        return self.tokens[index - 1]

    def form(self, index: int) -> str:
        return self.tokens[index - 1].form

    def head(self, index: int) -> int:
        return self.tokens[index - 1].head

    def edges(self) -> list[tuple[int, int]]:
        """Directed head -> dependent arcs (the artificial root is excluded)."""
        return [(t.head, t.index) for t in self.tokens if t.head != 0]

    def neighbours(self, index: int) -> list[int]:
        head = self.head(index)
        out = list(self.children[index])
        if head:
            out.append(head)
        return out

    def with_clusters(self, clusters: Mapping[str, int]) -> "DepTree":
        toks = [Token(t.index, t.form, t.head, t.ne_tag, clusters.get(t.form))
                for t in self.tokens]
        return DepTree(toks, self.sentence_id)


def _validate(tokens: Sequence[Token], sid: str) -> int:
    n = len(tokens)
    if n == 0:
        raise TreebankError(f"sentence {sid!r}: empty sentence")
    roots = []
    for pos, tok in enumerate(tokens, 1):
        if tok.index != pos:
            raise TreebankError(
                f"sentence {sid!r}: non-contiguous index {tok.index} at position {pos}")
        if not 0 <= tok.head <= n:
            raise TreebankError(
                f"sentence {sid!r}: head {tok.head} out of range for token {tok.index}")
        if tok.head == tok.index:
            raise TreebankError(f"sentence {sid!r}: token {tok.index} is its own head")
        if tok.head == 0:
            roots.append(tok.index)
    if not roots:
        raise TreebankError(f"sentence {sid!r}: no root (cycle in sentence)")
    if len(roots) > 1:
        raise TreebankError(f"sentence {sid!r}: multiple roots {roots}")
    # every token must reach the root without revisiting a node
    state = [0] * (n + 1)  # 0 unseen, 1 on current path, 2 known to reach root
    state[0] = 2
    for start in range(1, n + 1):
        path = []
        node = start
        while state[node] == 0:
            state[node] = 1
            path.append(node)
            node = tokens[node - 1].head
        if state[node] == 1:
            raise TreebankError(f"sentence {sid!r}: cycle in sentence through token {node}")
        for p in path:
            state[p] = 2
    return roots[0]


def parse_trees(stream: TextIO | str | Iterable[str]) -> list[DepTree]:
    """Parse TSV sentence blocks into validated trees.

    ``stream`` may be an open text file, a string, or an iterable of lines.
    Extra columns beyond the fourth (lemma, deprel, ...) are ignored.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    trees = []
    for sid, rows in _blocks(stream):
        toks = []
        for lineno, cols in rows:
            if len(cols) < 3:
                raise TreebankError(f"sentence {sid!r}, line {lineno}: expected >= 3 columns")
            try:
                index, head = int(cols[0]), int(cols[2])
            except ValueError:
                raise TreebankError(
                    f"sentence {sid!r}, line {lineno}: index/head must be integers") from None
            tag = cols[3].strip() if len(cols) > 3 else ""
            if tag == "_":
                tag = ""
            toks.append(Token(index, cols[1], head, tag))
        try:
            trees.append(DepTree(toks, sid))
        except TreebankError as err:
            first = rows[0][0]
            raise TreebankError(f"{err} (block starting at line {first})") from None
    return trees


def _blocks(lines: Iterable[str]) -> Iterator[tuple[str, list]]:
    ordinal = 0
    sid = None
    rows: list = []
    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            if rows:
                yield (sid if sid is not None else str(ordinal)), rows
                ordinal += 1
            sid, rows = None, []
            continue
        if line.startswith("#"):
            if line.startswith("#id="):
                sid = line[4:].strip()
            continue
        rows.append((lineno, line.split("\t")))
    if rows:
        yield (sid if sid is not None else str(ordinal)), rows


def serialize_trees(trees: Iterable[DepTree]) -> str:
    out = []
    for tree in trees:
        out.append(f"#id={tree.sentence_id}")
        for t in tree.tokens:
            cols = [str(t.index), t.form, str(t.head)]
            if t.ne_tag:
                cols.append(t.ne_tag)
            out.append("\t".join(cols))
        out.append("")
    return "\n".join(out) + ("\n" if out else "")


def read_trees(path) -> dict[str, DepTree]:
    with open(path, encoding="utf8") as f:
        trees = parse_trees(f)
    store = {}
    for t in trees:
        if t.sentence_id in store:
            raise TreebankError(f"duplicate sentence id {t.sentence_id!r} in {path}")
        store[t.sentence_id] = t
    return store


def write_trees(path, trees: Iterable[DepTree]) -> None:
    with open(path, "w", encoding="utf8", newline="\n") as f:
        f.write(serialize_trees(trees))


@dataclass(frozen=True)
class Pair:
    x: str
    y: str
    label: str  # POS or NEG

    @property
    def positive(self) -> bool:
        return self.label == POS


@dataclass
class PairedCorpus:
    """Labelled (tweet, response) pairs over a shared tree store."""

    pairs: list[Pair]
    trees: dict[str, DepTree]

    def __post_init__(self):
        for p in self.pairs:
            if p.label not in (POS, NEG):
                raise TreebankError(f"bad label {p.label!r} for pair {p.x}/{p.y}")
            for tid in (p.x, p.y):
                if tid not in self.trees:
                    raise TreebankError(f"pair references missing tree id {tid!r}")

    def __len__(self):
        return len(self.pairs)

    @property
    def positives(self) -> list[Pair]:
        return [p for p in self.pairs if p.positive]

    def labels(self) -> np.ndarray:
        return np.array([p.positive for p in self.pairs], dtype=bool)

    def tree_pair(self, i: int) -> tuple[DepTree, DepTree]:
        p = self.pairs[i]
        return self.trees[p.x], self.trees[p.y]


def parse_pairs(stream: TextIO | str | Iterable[str]) -> list[Pair]:
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    pairs = []
    for lineno, raw in enumerate(stream, 1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 3 or cols[2] not in (POS, NEG):
            raise TreebankError(f"pairs line {lineno}: expected 'x_id<TAB>y_id<TAB>pos|neg'")
        pairs.append(Pair(cols[0], cols[1], cols[2]))
    return pairs


def read_pairs(path, trees: dict[str, DepTree]) -> PairedCorpus:
    with open(path, encoding="utf8") as f:
        return PairedCorpus(parse_pairs(f), trees)


def write_pairs(path, pairs: Iterable[Pair]) -> None:
    with open(path, "w", encoding="utf8", newline="\n") as f:
        for p in pairs:
            f.write(f"{p.x}\t{p.y}\t{p.label}\n")


def generate_negatives(corpus: PairedCorpus, n_neg: int, seed: int) -> PairedCorpus:
    """Contrastive sampling: pair every tweet with ``n_neg`` foreign responses.

    Negatives for a positive ``(x, y+)`` are drawn uniformly without
    replacement from the distinct responses of the other positives,
    excluding ``y+`` itself.  Output keeps the positives first, in order.
    """
    pos = corpus.positives
    if len(pos) < 2:
        raise TreebankError("need at least 2 positive pairs to sample negatives")
    if n_neg < 1:
        raise TreebankError("n_neg must be >= 1")
    responses = sorted({p.y for p in pos})
    rng = np.random.default_rng(seed)
    negs = []
    for p in pos:
        pool = [y for y in responses if y != p.y]
        if n_neg > len(pool):
            raise TreebankError(
                f"n_neg={n_neg} exceeds the {len(pool)} foreign responses available")
        pick = rng.choice(len(pool), size=n_neg, replace=False)
        negs.extend(Pair(p.x, pool[j], NEG) for j in pick)
    return PairedCorpus(list(pos) + negs, corpus.trees)
