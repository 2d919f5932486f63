"""Command-line pipeline: parse-check, cluster, mine, featurize, arch, train,
eval and synth.

Exit status is 0 on success, 1 on usage errors and 2 on data errors.  Logs
go to standard error; outputs are written only to the ``--out`` style
paths.  ``--seed`` is a root seed from which every stage derives its own.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .abstraction import AbstractionError, kmeans_cluster, read_clusters, read_embeddings, write_clusters
from .config import ConfigError, RunConfig, load_config
from .evaluation import (EvalError, build_idf, cosine_baseline, p_at_1,
                         read_groups, truncate_groups, write_groups, write_report)
from .experiment import rank_groups, split_tweets
from .featurizer import featurize_pairs, pair_id, read_features, write_features
from .mining import MiningError, mine
from .net import (MODEL_FORMAT, MODEL_VERSION, NetError, architecture_from_json,
                  architecture_to_json, forward_batch, learn_architecture, load_model,
                  save_model, train, train_linear)
from .patterns import read_table, write_table
from .synthetic import SyntheticSpec, make_synthetic
from .treebank import (NEG, POS, PairedCorpus, TreebankError, generate_negatives, read_pairs,
                       read_trees, write_pairs, write_trees)

log = logging.getLogger("treematch")

TABLE_FORMAT_VERSION = 1
DATA_ERRORS = (TreebankError, AbstractionError, MiningError, NetError, EvalError, ConfigError,
               ValueError, KeyError, OSError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# config keys that subcommands expose as flags: flag -> (key, type)
_KEY_FLAGS = {
    "--seed": ("seed", int), "--threads": ("threads", int),
    "--max-size": ("max_size", int), "--min-support": ("min_support", int),
    "--tau": ("tau", float), "--alpha": ("alpha", float), "--abstraction": ("abstraction", str),
    "--k": ("k", int), "--kmeans-iters": ("kmeans_iters", int),
    "--h1": ("h1", int), "--h2": ("h2", int), "--h3": ("h3", int), "--density": ("density", int),
    "--margin": ("margin", float), "--lr": ("lr", float), "--batch-size": ("batch_size", int),
    "--dropout": ("dropout", float), "--max-epochs": ("max_epochs", int),
    "--patience": ("patience", int), "--l2": ("l2", float),
    "--n-neg": ("n_neg", int), "--valid-fraction": ("valid_fraction", float),
}


def _add_keys(p, *flags):
    for flag in ("--seed", "--threads") + flags:
        key, typ = _KEY_FLAGS[flag]
        p.add_argument(flag, dest=key, type=typ, default=None, help=f"overrides config key {key}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treematch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version",
                        version=f"treematch {__version__} (model {MODEL_FORMAT} v{MODEL_VERSION}, "
                                f"pattern table v{TABLE_FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def cmd(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value run configuration file")
        p.add_argument("-q", "--quiet", action="store_true", help="log warnings and errors only")
        return p

    p = cmd("parse-check", "validate a trees file and optionally a pairs file")
    p.add_argument("--trees", required=True)
    p.add_argument("--pairs")
    _add_keys(p)

    p = cmd("cluster", "k-means word clusters from an embeddings file")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True)
    _add_keys(p, "--k", "--kmeans-iters")

    p = cmd("negatives", "add sampled negatives to a positives-only pairs file")
    p.add_argument("--trees", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    _add_keys(p, "--n-neg")

    p = cmd("mine", "mine a pattern table")
    p.add_argument("--trees", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--clusters")
    p.add_argument("--out", required=True)
    _add_keys(p, "--max-size", "--min-support", "--tau", "--alpha", "--abstraction")

    p = cmd("featurize", "binary pattern features of every pair")
    p.add_argument("--trees", required=True)
    p.add_argument("--pairs", required=True)
    p.add_argument("--patterns", required=True)
    p.add_argument("--clusters")
    p.add_argument("--out", required=True)
    _add_keys(p)

    p = cmd("arch", "learn the sparse first-layer architecture")
    p.add_argument("--patterns", required=True)
    p.add_argument("--out", required=True)
    _add_keys(p, "--h1", "--h2", "--h3", "--density")

    p = cmd("train", "train the ranking model on featurised pairs")
    p.add_argument("--feats", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--arch", help="architecture file (required unless --linear)")
    p.add_argument("--linear", action="store_true", help="train the linear model instead")
    p.add_argument("--out", required=True)
    _add_keys(p, "--margin", "--lr", "--batch-size", "--dropout", "--max-epochs",
              "--patience", "--l2")

    p = cmd("eval", "P@1 of models and the cosine baseline on ranking groups")
    p.add_argument("--model", action="append", default=[], help="model file (repeatable)")
    p.add_argument("--patterns", required=True)
    p.add_argument("--trees", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--clusters")
    p.add_argument("--cosine", action="store_true", help="also score the TF-IDF cosine baseline")
    p.add_argument("--idf-pairs", help="pairs file whose trees define idf (default: group trees)")
    p.add_argument("--report", required=True)
    _add_keys(p)

    p = cmd("synth", "write a synthetic corpus with planted patterns")
    p.add_argument("--spec", help="JSON object of generator settings")
    p.add_argument("--out-dir", required=True)
    _add_keys(p, "--valid-fraction")
    return parser


# ----------------------------------------------------------------- commands

def _clusters(path):
    return read_clusters(path) if path else None


def _cmd_parse_check(args, cfg):
    trees = read_trees(args.trees)
    log.info("%d trees, %d tokens", len(trees), sum(len(t) for t in trees.values()))
    if args.pairs:
        corpus = read_pairs(args.pairs, trees)
        log.info("%d pairs (%d positive)", len(corpus), len(corpus.positives))


def _cmd_cluster(args, cfg):
    emb = read_embeddings(args.embeddings)
    clustering = kmeans_cluster(emb, cfg.k, cfg.kmeans_iters, cfg.stage_seed("cluster"))
    write_clusters(args.out, clustering)


def _cmd_negatives(args, cfg):
    corpus = read_pairs(args.pairs, read_trees(args.trees))
    out = generate_negatives(PairedCorpus(corpus.positives, corpus.trees), cfg.n_neg,
                             cfg.stage_seed("negatives"))
    write_pairs(args.out, out.pairs)


def _cmd_mine(args, cfg):
    corpus = read_pairs(args.pairs, read_trees(args.trees))
    table = mine(corpus, cfg.mining_config(_clusters(args.clusters)))
    log.info("mined %d patterns", len(table))
    write_table(args.out, table)


def _cmd_featurize(args, cfg):
    corpus = read_pairs(args.pairs, read_trees(args.trees))
    table = read_table(args.patterns)
    vecs = featurize_pairs([corpus.tree_pair(i) for i in range(len(corpus))], table,
                           _clusters(args.clusters), cfg.threads)
    ids = [pair_id(p.x, p.y, p.label) for p in corpus.pairs]
    write_features(args.out, ids, vecs, table.dimension)
    if vecs:
        log.info("median active features per pair: %.1f", float(np.median([len(v) for v in vecs])))


def _cmd_arch(args, cfg):
    table = read_table(args.patterns)
    arch = learn_architecture(table, cfg.h1, cfg.density, cfg.stage_seed("arch"), cfg.hidden)
    with open(args.out, "w", encoding="utf8", newline="\n") as f:
        json.dump(architecture_to_json(arch), f, separators=(",", ":"), sort_keys=True)
        f.write("\n")


def feature_groups(ids, vecs):
    """Per tweet: (gold vectors, negative vectors), in file order."""
    by_tweet: dict[str, tuple[list, list]] = {}
    for pid, v in zip(ids, vecs):
        x, _, label = pid.split("|")
        if label not in (POS, NEG):
            raise ValueError(f"pair {pid!r}: label must be pos or neg")
        gold, negs = by_tweet.setdefault(x, ([], []))
        (gold if label == POS else negs).append(v)
    return by_tweet


def _cmd_train(args, cfg):
    ids, vecs, dim = read_features(args.feats)
    triples = [(g, n) for gold, negs in feature_groups(ids, vecs).values()
               for g in gold for n in negs]
    vids, vvecs, vdim = read_features(args.valid)
    if vdim != dim:
        raise ValueError("training and validation features have different dimensions")
    valid = [[gold[0]] + negs for gold, negs in feature_groups(vids, vvecs).values()
             if len(gold) == 1 and negs]
    tcfg = cfg.train_config()
    if args.linear:
        arch, params = train_linear(triples, tcfg, valid, input_dim=dim)
        name = "linear"
    else:
        if not args.arch:
            raise UsageError("train: --arch is required unless --linear is given")
        with open(args.arch, encoding="utf8") as f:
            arch = architecture_from_json(json.load(f))
        params = train(triples, arch, tcfg, valid)
        name = "deep"
    save_model(args.out, arch, params, {"name": name, "train_seed": tcfg.seed})


def _cmd_eval(args, cfg):
    trees = read_trees(args.trees)
    groups = read_groups(args.groups)
    for g in groups:
        for r in (g.tweet,) + tuple(r for r, _ in g.candidates):
            if r not in trees:
                raise TreebankError(f"group references missing tree id {r!r}")
    if not args.model and not args.cosine:
        raise UsageError("eval: give at least one --model or --cosine")
    table = read_table(args.patterns)
    clustering = _clusters(args.clusters)
    n_neg = min(sum(1 for _, gold in g.candidates if not gold) for g in groups)
    protocols = {"1v1": truncate_groups(groups, 1)}
    if n_neg >= 9:
        protocols["1v9"] = truncate_groups(groups, 9)
    rows = {}
    keys = sorted({(g.tweet, r) for g in groups for r, _ in g.candidates})
    if args.model:
        vecs = featurize_pairs([(trees[x], trees[y]) for x, y in keys], table, clustering,
                               cfg.threads)
        feats = dict(zip(keys, vecs))
    for i, path in enumerate(args.model):
        arch, params, meta = load_model(path)
        if arch.input_dim != table.dimension:
            raise NetError(f"{path}: model input_dim {arch.input_dim} != table dimension {table.dimension}")
        scores = dict(zip(keys, forward_batch(params, arch, [feats[k] for k in keys])))
        name = meta.get("name") or Path(path).stem
        if name in rows:
            name = f"{name}_{i}"
        rows[name] = _rows(lambda x, y, s=scores: s[(x, y)], protocols)
    if args.cosine:
        if args.idf_pairs:
            corpus = read_pairs(args.idf_pairs, trees)
            ids = sorted({t for p in corpus.pairs for t in (p.x, p.y)})
        else:
            ids = sorted({t for k in keys for t in k})
        idf = build_idf([t.form for t in trees[i].tokens] for i in ids)
        toks = {i: [t.form for t in trees[i].tokens] for i in {t for k in keys for t in k}}
        rows["cossim"] = _rows(lambda x, y: cosine_baseline(toks[x], toks[y], idf), protocols)
    write_report(args.report, rows, {"groups": len(groups), "config": cfg.resolved(for_output=True)})
    for name, row in sorted(rows.items()):
        log.info("%s: %s", name, " ".join(f"{p}={row[p]:.4f}" for p in protocols))


def _rows(scorer, protocols):
    return {name: p_at_1(scorer, gs).p_at_1 for name, gs in protocols.items()}


def _cmd_synth(args, cfg):
    spec_kw = {}
    if args.spec:
        with open(args.spec, encoding="utf8") as f:
            spec_kw = json.load(f)
    if not isinstance(spec_kw, dict):
        raise ValueError("synthetic spec must be a JSON object")
    spec_kw.setdefault("seed", cfg.stage_seed("synth"))
    spec = SyntheticSpec(**spec_kw)
    sc = make_synthetic(spec)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trees(out / "trees.tsv", [sc.trees[k] for k in sorted(sc.trees)])
    write_pairs(out / "pairs.tsv", sc.pairs)
    split = split_tweets(sc.pairs, sc.test_tweets, cfg.valid_fraction, cfg.stage_seed("split"))
    for name, tweets in (("train", split.train), ("valid", split.valid), ("test", split.test)):
        keep = set(tweets)
        write_pairs(out / f"{name}.pairs.tsv", [p for p in sc.pairs if p.x in keep])
        write_groups(out / f"{name}.groups.tsv", rank_groups(sc.pairs, tweets))
    with open(out / "gold.tsv", "w", encoding="utf8", newline="\n") as f:
        for g in sc.gold:
            f.write(f"{g.key[0]}\t{g.key[1]}\n")
    with open(out / "spec.json", "w", encoding="utf8", newline="\n") as f:
        json.dump(spec.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    log.info("%d trees, %d pairs, %d test tweets", len(sc.trees), len(sc.pairs), len(split.test))


COMMANDS = {
    "parse-check": _cmd_parse_check, "cluster": _cmd_cluster, "negatives": _cmd_negatives,
    "mine": _cmd_mine, "featurize": _cmd_featurize, "arch": _cmd_arch, "train": _cmd_train,
    "eval": _cmd_eval, "synth": _cmd_synth,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "treematch: error: a subcommand is required")
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s", force=True)
    overrides = {k: getattr(args, k) for k in RunConfig.keys() if hasattr(args, k)}
    try:
        cfg = load_config(args.config, overrides)
        cfg.abstraction_flags()
        log.info("%s resolved config: %s", args.command,
                 json.dumps(cfg.resolved(), sort_keys=True))
        COMMANDS[args.command](args, cfg)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"treematch {args.command}: {e}", file=sys.stderr)
        return 1
    except DATA_ERRORS as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"treematch {args.command}: error: {msg}", file=sys.stderr)
        return 2
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
