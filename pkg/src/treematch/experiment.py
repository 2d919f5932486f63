"""End-to-end runs on a labelled corpus: mine, featurise, train, rank.

Used by the CLI-free demos and the quantitative acceptance checks.  The
corpus comes with a list of test tweets; the remaining tweets are split
into training and validation by a seeded shuffle.  Patterns are mined on
the training pairs only.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .evaluation import RankGroup, ablate, build_idf, cosine_baseline, p_at_1, truncate_groups
from .featurizer import Featurizer, SparseFeatureVector
from .mining import MiningConfig, mine
from .net import TrainConfig, forward, learn_architecture, train, train_linear
from .patterns import PatternTable
from .treebank import DepTree, Pair, PairedCorpus

log = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    mining: MiningConfig = field(default_factory=MiningConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    hidden: tuple[int, ...] = (100, 40, 10)
    density: int = 10
    valid_fraction: float = 0.1
    ablation: str | None = None
    seed: int = 0


@dataclass
class Split:
    train: list[str]
    valid: list[str]
    test: list[str]


def split_tweets(pairs: list[Pair], test_tweets: set[str], valid_fraction: float,
                 seed: int) -> Split:
    tweets = list(dict.fromkeys(p.x for p in pairs if p.positive))
    rest = [t for t in tweets if t not in test_tweets]
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(rest))
    n_valid = max(1, int(round(valid_fraction * len(rest))))
    valid = sorted(rest[i] for i in perm[:n_valid])
    train_ = sorted(rest[i] for i in perm[n_valid:])
    return Split(train_, valid, sorted(t for t in tweets if t in test_tweets))


def rank_groups(pairs: list[Pair], tweets: list[str]) -> list[RankGroup]:
    gold, negs = {}, {}
    for p in pairs:
        if p.positive:
            gold[p.x] = p.y
        else:
            negs.setdefault(p.x, []).append(p.y)
    return [RankGroup.of(t, gold[t], negs.get(t, [])) for t in tweets if negs.get(t)]


class FeatureCache:
    def __init__(self, trees: dict[str, DepTree], table: PatternTable, clustering=None):
        self.trees = trees
        self.fz = Featurizer(table, clustering)
        self._cache: dict[tuple[str, str], SparseFeatureVector] = {}

    def __call__(self, x: str, y: str) -> SparseFeatureVector:
        v = self._cache.get((x, y))
        if v is None:
            v = self.fz.featurize(self.trees[x], self.trees[y])
            self._cache[(x, y)] = v
        return v


def tokens(tree: DepTree) -> list[str]:
    return [t.form for t in tree.tokens]


@dataclass
class ExperimentResult:
    table: PatternTable
    p1: dict[str, dict[str, float]]    # model -> {"1v1": .., "1v9": ..}
    active_counts: list[int]           # active features of every test pair
    positive_active_counts: list[int]  # test positives only

    def median_active(self, positives_only: bool = True) -> float:
        vals = self.positive_active_counts if positives_only else self.active_counts
        return float(np.median(vals)) if vals else 0.0


def run_experiment(trees: dict[str, DepTree], pairs: list[Pair], test_tweets: set[str],
                   cfg: ExperimentConfig, models=("deep", "linear", "cossim"),
                   table: PatternTable | None = None) -> ExperimentResult:
    split = split_tweets(pairs, test_tweets, cfg.valid_fraction, cfg.seed)
    train_set = set(split.train)
    train_pairs = [p for p in pairs if p.x in train_set]
    if table is None:
        table = mine(PairedCorpus(train_pairs, trees), cfg.mining)
        if cfg.ablation:
            table = ablate(table, cfg.ablation)
    log.info("table: %d patterns", len(table))
    feats = FeatureCache(trees, table, cfg.mining.clustering)

    groups = {name: rank_groups(pairs, tweets)
              for name, tweets in (("train", split.train), ("valid", split.valid), ("test", split.test))}
    triples = []
    for g in groups["train"]:
        fp = feats(g.tweet, g.gold)
        triples.extend((fp, feats(g.tweet, r)) for r, gold in g.candidates if not gold)
    valid = [[feats(g.tweet, r) for r, _ in g.candidates] for g in groups["valid"]]
    test_full = groups["test"]
    evals = {"1v1": truncate_groups(test_full, 1), "1v9": truncate_groups(test_full, 9)}

    seeds = np.random.SeedSequence(cfg.seed).spawn(2)
    arch_seed, train_seed = (int(s.generate_state(1)[0]) for s in seeds)
    tcfg = replace(cfg.training, seed=train_seed)
    p1: dict[str, dict[str, float]] = {}
    scorers = {}
    if "deep" in models:
        arch = learn_architecture(table, cfg.hidden[0], min(cfg.density, cfg.hidden[0]),
                                  seed=arch_seed, hidden=cfg.hidden)
        params = train(triples, arch, tcfg, valid)
        scorers["deep"] = lambda x, y, a=arch, p=params: forward(p, a, feats(x, y))
    if "linear" in models:
        arch_l, params_l = train_linear(triples, tcfg, valid, input_dim=table.dimension)
        scorers["linear"] = lambda x, y, a=arch_l, p=params_l: forward(p, a, feats(x, y))
    if "cossim" in models:
        docs = {}
        for p in train_pairs:
            docs[p.x] = tokens(trees[p.x])
            docs[p.y] = tokens(trees[p.y])
        idf = build_idf(docs[k] for k in sorted(docs))
        scorers["cossim"] = lambda x, y: cosine_baseline(tokens(trees[x]), tokens(trees[y]), idf)
    for name, scorer in scorers.items():
        p1[name] = {proto: p_at_1(scorer, gs).p_at_1 for proto, gs in evals.items()}
        log.info("%s: %s", name, p1[name])

    counts, pos_counts = [], []
    for g in test_full:
        for r, gold in g.candidates:
            n = len(feats(g.tweet, r))
            counts.append(n)
            if gold:
                pos_counts.append(n)
    return ExperimentResult(table, p1, counts, pos_counts)
