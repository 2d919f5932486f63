"""Ranking evaluation, the TF-IDF cosine baseline and table ablations."""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .patterns import PatternTable, TreePairPattern


class EvalError(ValueError):
    pass


@dataclass(frozen=True)
class RankGroup:
    tweet: str
    candidates: tuple[tuple[str, bool], ...]  # (response id, is_gold)

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple((r, bool(g)) for r, g in self.candidates))
        if len(self.candidates) < 2:
            raise EvalError(f"group {self.tweet!r} needs at least 2 candidates")
        if sum(g for _, g in self.candidates) != 1:
            raise EvalError(f"group {self.tweet!r} must have exactly one gold candidate")

    @property
    def gold(self) -> str:
        return next(r for r, g in self.candidates if g)

    @classmethod
    def of(cls, tweet: str, gold: str, negatives: Iterable[str]) -> "RankGroup":
        return cls(tweet, ((gold, True),) + tuple((n, False) for n in negatives))


@dataclass
class EvalReport:
    p_at_1: float
    n_groups: int
    outcomes: list[bool] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"p_at_1": self.p_at_1, "groups": self.n_groups}


def p_at_1(scorer: Callable[[str, str], float], groups: Sequence[RankGroup]) -> EvalReport:
    """Fraction of groups whose gold candidate scores strictly above every
    other candidate."""
    if not groups:
        raise EvalError("no groups to evaluate")
    outcomes = []
    for g in groups:
        scores = [(scorer(g.tweet, r), gold) for r, gold in g.candidates]
        top = max(s for s, gold in scores if gold)
        others = [s for s, gold in scores if not gold]
        outcomes.append(all(top > s for s in others))
    return EvalReport(sum(outcomes) / len(outcomes), len(outcomes), outcomes)


def truncate_groups(groups: Sequence[RankGroup], n_negatives: int) -> list[RankGroup]:
    """Keep the gold and the first ``n_negatives`` negatives of each group
    (1v1 uses 1, 1v9 uses 9)."""
    out = []
    for g in groups:
        negs = [r for r, gold in g.candidates if not gold]
        if len(negs) < n_negatives:
            raise EvalError(f"group {g.tweet!r} has only {len(negs)} negatives")
        out.append(RankGroup.of(g.tweet, g.gold, negs[:n_negatives]))
    return out


# ------------------------------------------------------------------ CosSim

def build_idf(documents: Iterable[Sequence[str]]) -> dict[str, float]:
    """Smoothed idf ``ln((1 + N) / (1 + df)) + 1`` over token lists."""
    df: Counter = Counter()
    n = 0
    for doc in documents:
        n += 1
        df.update(set(doc))
    return {w: math.log((1 + n) / (1 + c)) + 1.0 for w, c in df.items()}


def _tfidf(tokens: Sequence[str], idf: Mapping[str, float], default: float) -> dict[str, float]:
    tf = Counter(tokens)
    return {w: c * idf.get(w, default) for w, c in tf.items()}


def cosine_baseline(x_tokens: Sequence[str], y_tokens: Sequence[str],
                    idf: Mapping[str, float], unseen_idf: float | None = None) -> float:
    """Cosine of TF-IDF bag-of-words vectors; 0 if either side is empty.

    Words missing from ``idf`` get ``unseen_idf`` (default: the largest idf).
    """
    default = unseen_idf if unseen_idf is not None else max(idf.values(), default=1.0)
    vx, vy = _tfidf(x_tokens, idf, default), _tfidf(y_tokens, idf, default)
    nx = math.sqrt(sum(v * v for v in vx.values()))
    ny = math.sqrt(sum(v * v for v in vy.values()))
    if nx == 0 or ny == 0:
        return 0.0
    dot = sum(v * vy[w] for w, v in vx.items() if w in vy)
    return min(1.0, dot / (nx * ny))


# ---------------------------------------------------------------- ablation

def ablate(table: PatternTable, mode: str) -> PatternTable:
    """``shallow_only`` keeps single-node-per-side patterns; ``no_abstraction``
    drops patterns with wildcard or cluster nodes.  Indices are re-densified."""
    if mode == "shallow_only":
        keep = [i for i in range(len(table)) if table.pattern(i).size == (1, 1)]
    elif mode == "no_abstraction":
        keep = [i for i in range(len(table)) if not table.pattern(i).abstract]
    else:
        raise EvalError(f"unknown ablation mode {mode!r}")
    return table.subset(keep)


def ablation_map(table: PatternTable, mode: str) -> np.ndarray:
    """Old index of every pattern kept by :func:`ablate`, in new-index order."""
    sub = ablate(table, mode)
    return np.array([table.index[k] for k in sub.keys], dtype=np.int64)


# -------------------------------------------------------------- file I/O

def write_groups(path, groups: Iterable[RankGroup]) -> None:
    with open(path, "w", encoding="utf8", newline="\n") as f:
        for g in groups:
            negs = [r for r, gold in g.candidates if not gold]
            f.write(f"{g.tweet}\t{g.gold}\t{','.join(negs)}\n")


def read_groups(path) -> list[RankGroup]:
    groups = []
    with open(path, encoding="utf8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise EvalError(f"{path}:{lineno}: expected tweet<TAB>gold<TAB>negatives")
            negs = [n for n in cols[2].split(",") if n]
            groups.append(RankGroup.of(cols[0], cols[1], negs))
    return groups


def write_report(path, rows: Mapping[str, dict], extra: dict | None = None) -> None:
    doc = {"models": {name: rows[name] for name in sorted(rows)}}
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf8", newline="\n") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def gold_pattern_present(table: PatternTable, gold: Iterable[TreePairPattern | tuple]) -> list[bool]:
    return [(g.key if isinstance(g, TreePairPattern) else tuple(g)) in table for g in gold]
