"""The command-line pipeline end to end on a small synthetic corpus.

Equivalent shell session (each step is ``treematch <step> ...``):

    synth -> mine -> featurize (train, valid) -> arch -> train (deep, linear) -> eval

Run: python3 demos/cli_pipeline.py [workdir]
"""
import json
import sys
import tempfile
from pathlib import Path

from treematch.cli import run


def main():
    work = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="treematch-"))
    d = str(work)
    work.mkdir(parents=True, exist_ok=True)
    (work / "small.json").write_text(json.dumps({"n_pairs": 400, "n_patterns": 8}))
    steps = [
        ["synth", "--spec", f"{d}/small.json", "--out-dir", d],
        ["mine", "--trees", f"{d}/trees.tsv", "--pairs", f"{d}/train.pairs.tsv", "--out", f"{d}/patterns.tsv"],
        ["featurize", "--trees", f"{d}/trees.tsv", "--pairs", f"{d}/train.pairs.tsv",
         "--patterns", f"{d}/patterns.tsv", "--out", f"{d}/train.feats.tsv"],
        ["featurize", "--trees", f"{d}/trees.tsv", "--pairs", f"{d}/valid.pairs.tsv",
         "--patterns", f"{d}/patterns.tsv", "--out", f"{d}/valid.feats.tsv"],
        ["arch", "--patterns", f"{d}/patterns.tsv", "--out", f"{d}/arch.json"],
        ["train", "--feats", f"{d}/train.feats.tsv", "--valid", f"{d}/valid.feats.tsv",
         "--arch", f"{d}/arch.json", "--out", f"{d}/deep.json"],
        ["train", "--linear", "--feats", f"{d}/train.feats.tsv", "--valid", f"{d}/valid.feats.tsv",
         "--out", f"{d}/linear.json"],
        ["eval", "--model", f"{d}/deep.json", "--model", f"{d}/linear.json", "--cosine",
         "--idf-pairs", f"{d}/train.pairs.tsv", "--patterns", f"{d}/patterns.tsv",
         "--trees", f"{d}/trees.tsv", "--groups", f"{d}/test.groups.tsv", "--report", f"{d}/report.json"],
    ]
    for argv in steps:
        print("$ treematch", " ".join(argv[:1] + ["-q"] + argv[1:]))
        code = run(argv[:1] + ["-q"] + argv[1:])
        if code:
            sys.exit(code)
    report = json.loads((work / "report.json").read_text())
    print(json.dumps(report["models"], indent=2))
    print("outputs in", d)


if __name__ == "__main__":
    main()
