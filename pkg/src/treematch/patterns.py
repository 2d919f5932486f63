"""Subtree-pair patterns, their canonical string form, and the pattern table.

Canonical strings nest with ``->`` for head->dependent: a single dependent
is written ``work->weekend``, several as ``win->(game,hope)`` with the
dependents sorted by their own canonical strings.  ``$k`` is wildcard slot
``k`` (shared between both sides) and ``~k`` a word from cluster ``k``.
Literal words escape ``\\ ( ) , >`` and a leading ``$``/``~`` with a
backslash.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

SLOT, SIM = "$", "~"
_SPECIAL = set("\\(),>")


def escape_word(word: str) -> str:
    out = "".join("\\" + ch if ch in _SPECIAL else ch for ch in word)
    if out[:1] in (SLOT, SIM):
        out = "\\" + out
    return out


def slot_label(k: int) -> str:
    return f"{SLOT}{k}"


def sim_label(k: int) -> str:
    return f"{SIM}{k}"


def label_kind(label: str) -> str:
    """'slot', 'sim' or 'word' for an (escaped) node label."""
    if label.startswith(SLOT):
        return "slot"
    if label.startswith(SIM):
        return "sim"
    return "word"


def unescape_word(label: str) -> str:
    out, i = [], 0
    while i < len(label):
        if label[i] == "\\" and i + 1 < len(label):
            i += 1
        out.append(label[i])
        i += 1
    return "".join(out)


def _encode(labels: Sequence[str], kids: Sequence[Sequence[int]], node: int) -> str:
    sub = [_encode(labels, kids, c) for c in kids[node]]
    if not sub:
        return labels[node]
    if len(sub) == 1:
        return f"{labels[node]}->{sub[0]}"
    sub.sort()
    return f"{labels[node]}->({','.join(sub)})"


@dataclass(frozen=True)
class SubtreeShape:
    """A rooted labelled tree; ``parents[root] == -1``."""

    labels: tuple[str, ...]
    parents: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "parents", tuple(self.parents))
        if len(self.labels) != len(self.parents) or not self.labels:
            raise ValueError("shape needs one parent entry per label")
        roots = [i for i, p in enumerate(self.parents) if p == -1]
        if len(roots) != 1:
            raise ValueError("shape must have exactly one root")
        # connected + acyclic: every node reaches the root within n steps
        n = len(self.parents)
        for i in range(n):
            node, steps = i, 0
            while self.parents[node] != -1:
                node = self.parents[node]
                steps += 1
                if steps > n or not 0 <= node < n:
                    raise ValueError("shape parents do not form a tree")

    @property
    def root(self) -> int:
        return self.parents.index(-1)

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in self.labels]
        for i, p in enumerate(self.parents):
            if p >= 0:
                kids[p].append(i)
        return kids

    def __len__(self):
        return len(self.labels)

    def canonical(self) -> str:
        return _encode(self.labels, self.children(), self.root)


def canonical_encode(shape: SubtreeShape) -> str:
    return shape.canonical()


def encode_nodes(tree, nodes: Iterable[int], label_of: Mapping[int, str]) -> str:
    """Canonical string of the subtree a connected token set induces in ``tree``."""
    nodes = set(nodes)
    root = next(v for v in nodes if tree.head(v) not in nodes)
    ch = tree.children

    def enc(v):
        sub = [enc(c) for c in ch[v] if c in nodes]
        if not sub:
            return label_of[v]
        if len(sub) == 1:
            return f"{label_of[v]}->{sub[0]}"
        sub.sort()
        return f"{label_of[v]}->({','.join(sub)})"

    return enc(root)


def encode_pair(tree_x, nodes_x, lab_x: Mapping[int, "str | int"],
                tree_y, nodes_y, lab_y: Mapping[int, "str | int"]) -> tuple[str, str]:
    """Canonical (left, right) key of a subtree pair.

    Integer labels denote wildcard groups; groups are numbered ``$0, $1, ...``
    by the assignment giving the lexicographically least key.
    """
    groups = sorted({v for v in itertools.chain(lab_x.values(), lab_y.values())
                     if isinstance(v, int)})
    if not groups:
        return encode_nodes(tree_x, nodes_x, lab_x), encode_nodes(tree_y, nodes_y, lab_y)
    best = None
    for perm in itertools.permutations(range(len(groups))):
        name = {g: slot_label(p) for g, p in zip(groups, perm)}
        lx = {v: name[l] if isinstance(l, int) else l for v, l in lab_x.items()}
        ly = {v: name[l] if isinstance(l, int) else l for v, l in lab_y.items()}
        key = (encode_nodes(tree_x, nodes_x, lx), encode_nodes(tree_y, nodes_y, ly))
        if best is None or key < best:
            best = key
    return best


# ---------------------------------------------------------------- parsing

def _read_label(s: str, i: int) -> tuple[str, int]:
    start = i
    while i < len(s):
        ch = s[i]
        if ch == "\\":
            i += 2
            continue
        if ch in "(),":
            break
        if ch == "-" and s.startswith("->", i):
            break
        i += 1
    if i == start:
        raise ValueError(f"empty label at offset {start} in {s!r}")
    return s[start:i], i


def parse_shape(s: str) -> SubtreeShape:
    """Inverse of :func:`canonical_encode`."""
    labels: list[str] = []
    parents: list[int] = []

    def node(i, parent):
        lab, i = _read_label(s, i)
        me = len(labels)
        labels.append(lab)
        parents.append(parent)
        if s.startswith("->", i):
            i += 2
            if i < len(s) and s[i] == "(":
                i += 1
                while True:
                    i = node(i, me)
                    if i >= len(s):
                        raise ValueError(f"unterminated child list in {s!r}")
                    if s[i] == ",":
                        i += 1
                        continue
                    if s[i] == ")":
                        return i + 1
                    raise ValueError(f"unexpected {s[i]!r} in {s!r}")
            return node(i, me)
        return i

    end = node(0, -1)
    if end != len(s):
        raise ValueError(f"trailing text in shape {s!r}")
    return SubtreeShape(labels, parents)


@dataclass(frozen=True)
class TreePairPattern:
    left: SubtreeShape
    right: SubtreeShape

    @classmethod
    def from_key(cls, key: tuple[str, str]) -> "TreePairPattern":
        return cls(parse_shape(key[0]), parse_shape(key[1]))

    @property
    def key(self) -> tuple[str, str]:
        return (self.left.canonical(), self.right.canonical())

    @property
    def size(self) -> tuple[int, int]:
        return (len(self.left), len(self.right))

    def slots(self) -> set[str]:
        return {l for l in self.left.labels + self.right.labels if l.startswith(SLOT)}

    @property
    def abstract(self) -> bool:
        return any(label_kind(l) != "word" for l in self.left.labels + self.right.labels)


def key_size(key: tuple[str, str]) -> tuple[int, int]:
    return (len(parse_shape(key[0])), len(parse_shape(key[1])))


def smoothed_score(pos: int, neg: int, alpha: float) -> float:
    return (pos + alpha) / (pos + neg + 2 * alpha)


@dataclass(frozen=True)
class PatternStats:
    support_pos: int
    support_neg: int
    score: float


@dataclass
class PatternTable:
    """Mined patterns indexed densely from 0; treat as frozen once built."""

    keys: list[tuple[str, str]] = field(default_factory=list)
    stats: list[PatternStats] = field(default_factory=list)
    index: dict[tuple[str, str], int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if len(self.keys) != len(self.stats):
            raise ValueError("keys and stats differ in length")
        self.index = {k: i for i, k in enumerate(self.keys)}
        if len(self.index) != len(self.keys):
            raise ValueError("duplicate pattern in table")

    def __len__(self):
        return len(self.keys)

    @property
    def dimension(self) -> int:
        return len(self.keys)

    def __contains__(self, key):
        return key in self.index

    def pattern(self, i: int) -> TreePairPattern:
        return TreePairPattern.from_key(self.keys[i])

    def frequencies(self):
        return [s.support_pos + s.support_neg for s in self.stats]

    def subset(self, keep: Iterable[int]) -> "PatternTable":
        keep = sorted(keep)
        return PatternTable([self.keys[i] for i in keep], [self.stats[i] for i in keep])


def write_table(path, table: PatternTable) -> None:
    with open(path, "w", encoding="utf8", newline="\n") as f:
        for i, (k, s) in enumerate(zip(table.keys, table.stats)):
            f.write(f"{i}\t{k[0]}\t{k[1]}\t{s.support_pos}\t{s.support_neg}\t{s.score!r}\n")


def read_table(path) -> PatternTable:
    keys, stats = [], []
    with open(path, encoding="utf8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 tab-separated columns")
            if int(cols[0]) != len(keys):
                raise ValueError(f"{path}:{lineno}: indices must be dense and in order")
            parse_shape(cols[1]), parse_shape(cols[2])
            keys.append((cols[1], cols[2]))
            stats.append(PatternStats(int(cols[3]), int(cols[4]), float(cols[5])))
    return PatternTable(keys, stats)
