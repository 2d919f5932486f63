"""Tree builders and independent reference implementations for the tests."""
from __future__ import annotations

import itertools

import numpy as np

from treematch.mining import growth_schedule
from treematch.featurizer import SparseFeatureVector
from treematch.net import backward_pair, forward, init_params, learn_architecture, sigmoid
from treematch.patterns import parse_shape, smoothed_score
from treematch.treebank import DepTree, Pair, PairedCorpus, Token


def tree(words, heads, tags=None, sid="s"):
    """Build a tree from 1-based ``heads`` (0 = root)."""
    tags = tags or [""] * len(words)
    return DepTree([Token(i + 1, w, h, t) for i, (w, h, t) in enumerate(zip(words, heads, tags))], sid)


def random_heads(rng, n):
    """Heads of a uniformly shuffled random recursive tree on ``n`` tokens."""
    perm = rng.permutation(n)
    heads = [0] * n
    for rank in range(1, n):
        parent_rank = int(rng.integers(rank))
        heads[perm[rank]] = int(perm[parent_rank]) + 1
    return heads


def random_tree(rng, n, vocab, sid="s", tag_rate=0.0, tags=("E0", "E1")):
    words = [vocab[int(rng.integers(len(vocab)))] for _ in range(n)]
    ne = [tags[int(rng.integers(len(tags)))] if rng.random() < tag_rate else "" for _ in range(n)]
    return tree(words, random_heads(rng, n), ne, sid)


def random_corpus(rng, n_pairs, max_nodes, vocab):
    trees, pairs = {}, []
    for i in range(n_pairs):
        x, y = f"x{i}", f"y{i}"
        trees[x] = random_tree(rng, int(rng.integers(1, max_nodes + 1)), vocab, x)
        trees[y] = random_tree(rng, int(rng.integers(1, max_nodes + 1)), vocab, y)
        pairs.append(Pair(x, y, "pos" if rng.random() < 0.6 else "neg"))
    if not any(p.positive for p in pairs):
        pairs[0] = Pair(pairs[0].x, pairs[0].y, "pos")
    return PairedCorpus(pairs, trees)


# ---------------------------------------------------------- canonical forms

def nested_form(labels, kids, node):
    """Isomorphism-invariant nested tuple, independent of the string encoder."""
    return (labels[node], tuple(sorted(nested_form(labels, kids, c) for c in kids[node])))


def tree_side_form(t: DepTree, nodes):
    nodes = set(nodes)
    root = next(v for v in nodes if t.head(v) not in nodes)
    kids = {v: [c for c in t.children[v] if c in nodes] for v in nodes}
    labels = {v: t.form(v) for v in nodes}
    return nested_form(labels, kids, root)


def key_form(key):
    """Nested form of a mined (word-only) key."""
    out = []
    for s in key:
        shape = parse_shape(s)
        labels = [lab.replace("\\", "") for lab in shape.labels]
        out.append(nested_form(labels, shape.children(), shape.root))
    return tuple(out)


# -------------------------------------------------------- mining reference

def connected_subsets(t: DepTree, max_size):
    """All connected token sets up to ``max_size``, by exhaustive subset test.

    A set is connected in a tree iff exactly one member has its head
    outside the set."""
    n = len(t)
    out = []
    for size in range(1, min(max_size, n) + 1):
        for combo in itertools.combinations(range(1, n + 1), size):
            s = set(combo)
            if sum(1 for v in combo if t.head(v) not in s) == 1:
                out.append(combo)
    return out


def _leaf_deletions(t: DepTree, nodes):
    s = set(nodes)
    for v in nodes:
        rest = s - {v}
        if rest and sum(1 for u in rest if t.head(u) not in rest) == 1:
            yield tuple(sorted(rest))


def brute_force_mine(corpus: PairedCorpus, max_size, min_pos, tau, alpha):
    """Reference miner over explicitly enumerated occurrences.

    Every connected subtree pair of every corpus pair is listed up front.
    An occurrence is a candidate in its cell when deleting one leaf on the
    side the cell grows from yields a surviving occurrence of the parent
    cell; a key survives when its candidate occurrences pass the filters.
    Returns ``{nested form: (pos, neg)}``.
    """
    pairs = [(corpus.trees[p.x], corpus.trees[p.y]) for p in corpus.pairs]
    labels = corpus.labels()
    subs = [(connected_subsets(tx, max_size), connected_subsets(ty, max_size)) for tx, ty in pairs]
    by_cell = {}
    for pid, (ls, rs) in enumerate(subs):
        for lx in ls:
            for ry in rs:
                by_cell.setdefault((len(lx), len(ry)), []).append((pid, lx, ry))
    survivors, kept = {}, {}
    for cell, parent, side in growth_schedule(max_size):
        occs = by_cell.get(cell, [])
        if parent is not None:
            prev = survivors[parent]
            cand = []
            for pid, lx, ry in occs:
                tx, ty = pairs[pid]
                if side == "left":
                    smaller = ((pid, d, ry) for d in _leaf_deletions(tx, lx))
                else:
                    smaller = ((pid, lx, d) for d in _leaf_deletions(ty, ry))
                if any(o in prev for o in smaller):
                    cand.append((pid, lx, ry))
            occs = cand
        groups = {}
        for pid, lx, ry in occs:
            tx, ty = pairs[pid]
            groups.setdefault((tree_side_form(tx, lx), tree_side_form(ty, ry)), []).append((pid, lx, ry))
        surv = set()
        for form, members in groups.items():
            pids = {m[0] for m in members}
            pos = sum(1 for p in pids if labels[p])
            neg = len(pids) - pos
            if pos >= min_pos and smoothed_score(pos, neg, alpha) >= tau:
                kept[form] = (pos, neg)
                surv.update(members)
        survivors[cell] = surv
    return kept


# ----------------------------------------------------------- net reference

def sigmoid_ref(z):
    return 1.0 / (1.0 + np.exp(-z))


def greedy_replay(freq, h1, k, seed):
    """Plain-loop replay of the balanced assignment rule."""
    freq = [float(f) for f in freq]
    rng = np.random.default_rng(seed)
    tiebreak = rng.permutation(len(freq))
    order = sorted(range(len(freq)), key=lambda i: (-freq[i], tiebreak[i]))
    loads = [0.0] * h1
    conn = [None] * len(freq)
    for i in order:
        units = sorted(range(h1), key=lambda u: (loads[u], u))[:k]
        conn[i] = sorted(units)
        for u in units:
            loads[u] += freq[i]
    return conn, loads


def dense_sgd_reference(params, arch, x_pos, x_neg, margin, lr, l2, masks=None):
    """One hinge SGD step with the first layer held as a dense (D, h1) matrix.

    The first layer is evaluated row by row in ascending input order and its
    gradient is the outer product of the dense input with the unit deltas.
    Returns the updated dense first-layer matrix, first-layer bias and the
    dense layers, plus the loss.
    """
    d, h1 = arch.input_dim, arch.first_width
    w1 = np.zeros((d, h1))
    for i in range(d):
        for j in range(arch.k):
            w1[i, arch.connectivity[i, j]] = params.w1[i, j]
    xs = np.zeros((2, d))
    xs[0, x_pos.active] = 1.0
    xs[1, x_neg.active] = 1.0
    z = np.tile(params.b1, (2, 1))
    for b in range(2):
        for i in range(d):
            if xs[b, i]:
                z[b] = z[b] + w1[i]
    pre, acts = [], []
    a = z
    n_hidden = len(arch.hidden)
    for layer in range(n_hidden + 1):
        if layer > 0:
            a = a @ params.weights[layer - 1].T + params.biases[layer - 1]
        if layer < n_hidden:
            s = sigmoid(a)
            pre.append(s)
            a = s * masks[layer] if masks is not None else s
        acts.append(a)
    score = acts[-1][:, 0]
    viol = margin + score[1] - score[0]
    weights = [w.copy() for w in params.weights]
    biases = [b.copy() for b in params.biases]
    b1 = params.b1.copy()
    delta = np.array([[-1.0], [1.0]]) if viol > 0 else np.zeros((2, 1))
    for layer in range(n_hidden, 0, -1):
        gw = delta.T @ acts[layer - 1]
        gb = delta.sum(axis=0)
        delta = delta @ params.weights[layer - 1]
        if masks is not None:
            delta = delta * masks[layer - 1]
        s = pre[layer - 1]
        delta = delta * s * (1.0 - s)
        weights[layer - 1] = weights[layer - 1] - lr * (gw + l2 * weights[layer - 1])
        biases[layer - 1] = biases[layer - 1] - lr * gb
    g1 = np.zeros((d, h1))
    for i in range(d):
        for u in range(h1):
            g1[i, u] = xs[0, i] * delta[0, u] + xs[1, i] * delta[1, u]
    w1 = w1 - lr * (g1 + l2 * w1)
    b1 = b1 - lr * delta.sum(axis=0)
    return w1, b1, weights, biases, max(float(viol), 0.0)


# ------------------------------------------------------------ CLI pipeline

PIPELINE_OUTPUTS = ("patterns.tsv", "arch.json", "deep.json", "linear.json", "report.json")


def run_pipeline(work, seed=0, threads=1, spec=None):
    """synth -> mine -> featurize -> arch -> train -> eval through the CLI.

    Returns the exit codes of every stage in order."""
    import json

    from treematch.cli import run

    work.mkdir(parents=True, exist_ok=True)
    d = str(work)
    common = ["-q", "--seed", str(seed), "--threads", str(threads)]
    if spec is not None:
        (work / "spec.in.json").write_text(json.dumps(spec))
    steps = [
        ["synth", "--out-dir", d] + (["--spec", f"{d}/spec.in.json"] if spec is not None else []),
        ["mine", "--trees", f"{d}/trees.tsv", "--pairs", f"{d}/train.pairs.tsv", "--out", f"{d}/patterns.tsv"],
    ]
    for part in ("train", "valid"):
        steps.append(["featurize", "--trees", f"{d}/trees.tsv", "--pairs", f"{d}/{part}.pairs.tsv",
                      "--patterns", f"{d}/patterns.tsv", "--out", f"{d}/{part}.feats.tsv"])
    steps += [
        ["arch", "--patterns", f"{d}/patterns.tsv", "--out", f"{d}/arch.json"],
        ["train", "--feats", f"{d}/train.feats.tsv", "--valid", f"{d}/valid.feats.tsv",
         "--arch", f"{d}/arch.json", "--out", f"{d}/deep.json"],
        ["train", "--linear", "--feats", f"{d}/train.feats.tsv", "--valid", f"{d}/valid.feats.tsv",
         "--out", f"{d}/linear.json"],
        ["eval", "--model", f"{d}/deep.json", "--model", f"{d}/linear.json", "--cosine",
         "--idf-pairs", f"{d}/train.pairs.tsv", "--patterns", f"{d}/patterns.tsv",
         "--trees", f"{d}/trees.tsv", "--groups", f"{d}/test.groups.tsv", "--report", f"{d}/report.json"],
    ]
    return [run(s[:1] + common + s[1:]) for s in steps]


# ------------------------------------------------------- random small nets

def sparse_vec(active, dim):
    return SparseFeatureVector(np.array(sorted(active), dtype=np.int64), dim)


def random_vec(rng, dim, rate=0.3):
    return sparse_vec(np.flatnonzero(rng.random(dim) < rate), dim)


def random_net(rng, hidden=(8, 6, 4)):
    dim = int(rng.integers(1, 31))
    k = int(rng.integers(1, 5))
    arch = learn_architecture(rng.integers(1, 20, size=dim), hidden[0], k,
                              seed=int(rng.integers(1000)), hidden=hidden)
    params = init_params(arch, seed=int(rng.integers(1000)))
    # non-zero biases so no partial is special-cased by symmetry
    params.b1 += rng.normal(scale=0.3, size=params.b1.shape)
    for b in params.biases:
        b += rng.normal(scale=0.3, size=b.shape)
    return arch, params


def hinge_loss(params, arch, xp, xn, margin):
    return max(0.0, margin + forward(params, arch, xn) - forward(params, arch, xp))


def finite_difference_check(rng, active):
    """Compare every partial of the hinge loss with a central difference.

    With ``active`` the margin keeps the hinge well inside its linear piece;
    otherwise it is met with 0.1 to spare and the gradient must be exactly
    zero.  Returns the worst relative error."""
    arch, p = random_net(rng)
    xp, xn = random_vec(rng, arch.input_dim), random_vec(rng, arch.input_dim)
    d = forward(p, arch, xp) - forward(p, arch, xn)
    margin = abs(d) + 1.0 if active else d - 0.1
    loss, grad = backward_pair(p, arch, xp, xn, margin)
    if not active:
        assert loss == 0.0 and grad.rows.size == 0
        assert all(not np.any(a) for a in [grad.b1] + grad.weights + grad.biases)
        return 0
    ref = hinge_loss(p, arch, xp, xn, margin)
    assert abs(loss - ref) <= 1e-12 * max(1.0, abs(ref))
    touched = set(xp.active.tolist()) | set(xn.active.tolist())
    assert set(grad.rows.tolist()) == touched
    analytic = [grad.dense_w1(arch), grad.b1] + [a for pair in zip(grad.weights, grad.biases) for a in pair]
    arrays = [p.w1, p.b1] + [a for pair in zip(p.weights, p.biases) for a in pair]
    h, worst = 1e-5, 0.0
    for arr, g in zip(arrays, analytic):
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = hinge_loss(p, arch, xp, xn, margin)
            arr[idx] = old - h
            down = hinge_loss(p, arch, xp, xn, margin)
            arr[idx] = old
            num = (up - down) / (2 * h)
            scale = max(abs(num), abs(g[idx]))
            if scale > 1e-9:
                worst = max(worst, abs(num - g[idx]) / scale)
            else:
                assert abs(num - g[idx]) < 1e-9
    return worst


# ------------------------------------------------------- acceptance report

ACCEPTANCE_LINES: list[str] = []


class criterion:
    """Context manager recording one PASS/FAIL line for an acceptance check.

    ``detail`` may be filled in inside the block with measured values."""

    def __init__(self, number, claim):
        self.number, self.claim, self.detail = number, claim, ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        status = "PASS" if exc_type is None else "FAIL"
        line = f"{status} criterion {self.number}: {self.claim}"
        if self.detail:
            line += f" [{self.detail}]"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return False
