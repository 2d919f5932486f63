"""Mine matching patterns from a handful of hand-made pairs and featurise one.

Run: python3 demos/mining_walkthrough.py
"""
from treematch.featurizer import featurize
from treematch.mining import MiningConfig, mine
from treematch.product import build_product, to_dot
from treematch.treebank import NEG, POS, Pair, PairedCorpus, parse_trees

TREES = """\
#id=t1
1\tI\t2
2\twork\t0
3\tall\t4
4\tweekend\t2

#id=t2
1\twork\t0
2\tthis\t3
3\tweekend\t1

#id=t3
1\tsadly\t2
2\twork\t0
3\tweekend\t2

#id=r1
1\tyou\t2
2\trest\t0
3\tsoon\t2

#id=r2
1\tgo\t2
2\trest\t0

#id=r3
1\trest\t0
2\tmore\t1

#id=r4
1\tnice\t2
2\tgame\t0
"""


def main():
    trees = {t.sentence_id: t for t in parse_trees(TREES)}
    pairs = [Pair("t1", "r1", POS), Pair("t2", "r2", POS), Pair("t3", "r3", POS),
             Pair("t1", "r4", NEG), Pair("t2", "r4", NEG), Pair("t3", "r4", NEG)]
    corpus = PairedCorpus(pairs, trees)

    # three positives contain work->weekend on the tweet side and rest on the
    # response side; the negatives never do
    table = mine(corpus, MiningConfig(max_size=3, min_support_pos=2, tau=0.6))
    print(f"{len(table)} patterns")
    for (left, right), st in zip(table.keys, table.stats):
        print(f"  {left:<24} <-> {right:<12} pos={st.support_pos} neg={st.support_neg} score={st.score:.2f}")

    vec = featurize(trees["t1"], trees["r3"], table)
    print("\nt1 vs r3 fires:", [table.keys[i] for i in vec.active])
    vec = featurize(trees["t1"], trees["r4"], table)
    print("t1 vs r4 fires:", [table.keys[i] for i in vec.active])

    # the product graph is where co-occurring structure lives
    pg = build_product(trees["t2"], trees["r2"])
    print(f"\nproduct of t2 and r2: {len(pg.vertices)} vertices, {len(pg.edges)} edges")
    print(to_dot(pg))


if __name__ == "__main__":
    main()
