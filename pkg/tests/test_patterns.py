import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import nested_form, random_heads, tree
from treematch.patterns import (PatternStats, PatternTable, SubtreeShape, TreePairPattern,
                                canonical_encode, encode_pair, escape_word, key_size,
                                label_kind, parse_shape, read_table, smoothed_score,
                                unescape_word, write_table)


def _shape_from_heads(labels, heads):
    return SubtreeShape(labels, [h - 1 for h in heads])


class TestCanonicalEncode:
    def test_single_node(self):
        assert canonical_encode(SubtreeShape(["rest"], [-1])) == "rest"

    def test_child_order_invariance(self):
        a = SubtreeShape(["win", "game", "hope"], [-1, 0, 0])
        b = SubtreeShape(["win", "hope", "game"], [-1, 0, 0])
        assert canonical_encode(a) == canonical_encode(b) == "win->(game,hope)"

    def test_chain(self):
        assert canonical_encode(SubtreeShape(["a", "b", "c"], [-1, 0, 1])) == "a->b->c"

    @given(st.integers(0, 2**32 - 1), st.integers(1, 7))
    @settings(max_examples=200, deadline=None)
    def test_isomorphic_relabellings_share_a_key(self, seed, n):
        rng = np.random.default_rng(seed)
        labels = [str(rng.choice(["a", "b", "c"])) for _ in range(n)]
        heads = random_heads(rng, n)
        perm = rng.permutation(n)  # node i moves to position perm[i]
        labels2 = [None] * n
        heads2 = [0] * n
        for i in range(n):
            labels2[perm[i]] = labels[i]
            heads2[perm[i]] = 0 if heads[i] == 0 else int(perm[heads[i] - 1]) + 1
        assert (canonical_encode(_shape_from_heads(labels, heads))
                == canonical_encode(_shape_from_heads(labels2, heads2)))

    def test_injective_over_small_shapes(self):
        # every non-isomorphic shape up to 5 nodes over two labels gets its own key
        rng = np.random.default_rng(0)
        seen = {}
        for _ in range(4000):
            n = int(rng.integers(1, 6))
            labels = [str(rng.choice(["x", "y"])) for _ in range(n)]
            shape = _shape_from_heads(labels, random_heads(rng, n))
            form = nested_form(shape.labels, shape.children(), shape.root)
            key = canonical_encode(shape)
            assert seen.setdefault(key, form) == form
        assert len(seen) > 100

    @given(st.integers(0, 2**32 - 1), st.integers(1, 6))
    @settings(max_examples=200, deadline=None)
    def test_parse_inverts_encode(self, seed, n):
        rng = np.random.default_rng(seed)
        words = ["a", "b->c", "(x)", "$1", "~2", "p,q", "\\"]
        labels = [escape_word(str(rng.choice(words))) for _ in range(n)]
        shape = _shape_from_heads(labels, random_heads(rng, n))
        back = parse_shape(canonical_encode(shape))
        assert nested_form(back.labels, back.children(), back.root) == \
            nested_form(shape.labels, shape.children(), shape.root)


class TestLabels:
    @pytest.mark.parametrize("word", ["plain", "$5", "~3", "a(b)", "x,y", "a->b", "back\\slash", "é"])
    def test_escape_round_trip(self, word):
        esc = escape_word(word)
        assert unescape_word(esc) == word
        assert label_kind(esc) == "word"

    def test_kinds(self):
        assert label_kind("$0") == "slot"
        assert label_kind("~4") == "sim"


class TestEncodePair:
    def test_slot_numbering_ignores_group_ids(self):
        tx = tree(["win", "A", "B"], [0, 1, 1])
        ty = tree(["congrats", "A", "B"], [0, 1, 2])
        k1 = encode_pair(tx, (1, 2, 3), {1: "win", 2: 0, 3: 1}, ty, (1, 2, 3), {1: "congrats", 2: 0, 3: 1})
        k2 = encode_pair(tx, (1, 2, 3), {1: "win", 2: 7, 3: 3}, ty, (1, 2, 3), {1: "congrats", 2: 7, 3: 3})
        assert k1 == k2
        assert sorted(TreePairPattern.from_key(k1).slots()) == ["$0", "$1"]

    def test_swapped_slots_give_the_same_key(self):
        tx = tree(["win", "A", "B"], [0, 1, 1])
        ty = tree(["c", "A", "B"], [0, 1, 2])
        a = encode_pair(tx, (1, 2, 3), {1: "win", 2: 0, 3: 1}, ty, (1, 2, 3), {1: "c", 2: 0, 3: 1})
        b = encode_pair(tx, (1, 2, 3), {1: "win", 2: 1, 3: 0}, ty, (1, 2, 3), {1: "c", 2: 1, 3: 0})
        assert a == b

    def test_pattern_properties(self):
        p = TreePairPattern.from_key(("$0->win", "$0->~3"))
        assert p.size == (2, 2) and p.abstract and p.slots() == {"$0"}
        assert not TreePairPattern.from_key(("work->weekend", "rest")).abstract
        assert key_size(("a->(b,c)", "d")) == (3, 1)


class TestScore:
    @pytest.mark.parametrize("pos, neg, expected, kept", [
        (3, 0, 4 / 5, True), (1, 9, 2 / 12, False), (0, 0, 0.5, False)])
    def test_values(self, pos, neg, expected, kept):
        score = smoothed_score(pos, neg, 1.0)
        assert score == pytest.approx(expected)
        assert (score >= 0.6) is kept

    @given(st.integers(0, 100), st.integers(0, 100), st.floats(0.1, 5))
    def test_bounded(self, pos, neg, alpha):
        assert 0.0 < smoothed_score(pos, neg, alpha) < 1.0


class TestTable:
    def test_round_trip(self, tmp_path):
        keys = [("work->weekend", "rest"), ("$0->win", "$0->congrats"), ("a\\,b", "~2")]
        stats = [PatternStats(3, 0, 4 / 6), PatternStats(5, 1, 6 / 8), PatternStats(2, 2, 0.5)]
        table = PatternTable(keys, stats)
        write_table(tmp_path / "p.tsv", table)
        back = read_table(tmp_path / "p.tsv")
        assert back.keys == keys and back.stats == stats
        assert back.index[keys[1]] == 1 and keys[2] in back

    def test_dense_indices_required(self, tmp_path):
        (tmp_path / "p.tsv").write_text("1\ta\tb\t1\t0\t0.5\n")
        with pytest.raises(ValueError, match="dense"):
            read_table(tmp_path / "p.tsv")

    def test_subset_redensifies(self):
        t = PatternTable([("a", "b"), ("c", "d"), ("e", "f")], [PatternStats(1, 0, 1.0)] * 3)
        s = t.subset([2, 0])
        assert s.keys == [("a", "b"), ("e", "f")] and s.index[("e", "f")] == 1

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            PatternTable([("a", "b"), ("a", "b")], [PatternStats(1, 0, 1.0)] * 2)

    @pytest.mark.parametrize("bad", ["", "a->", "a->(b", "a->(b,c)x", "(a)"])
    def test_malformed_shapes(self, bad):
        with pytest.raises(ValueError):
            parse_shape(bad)
