"""Consistency of the stub backends on tests/fixtures/pairs_1000.tsv.

Renders the three perturbations by string formatting, labels them with
stub_labels.py, and counts agreements. Accuracy uses the ORIGINAL
rendering against the gold column of the same file.

Run: python3 order_stub.py
"""
import csv
import json
import os

from stub_labels import RTE, order_sensitive, symmetric

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURE = os.path.join(HERE, "..", "fixtures", "pairs_1000.tsv")


def rows():
    with open(FIXTURE, encoding="utf-8", newline="") as f:
        r = csv.reader(f, delimiter="\t", quoting=csv.QUOTE_NONE)
        next(r)
        return [(a, b, g) for _, a, b, g in r]


def renderings(a, b):
    return {
        "original": f"Sentence1: {a} Sentence2: {b}",
        "reverse": f"Sentence2: {b} Sentence1: {a}",
        "signal": f"[Sentence1] {a} [Sentence2] {b}",
    }


def run(kind, seed, data):
    preds = {"original": [], "reverse": [], "signal": []}
    for a, b, _ in data:
        for p, text in renderings(a, b).items():
            if kind == "symmetric":
                preds[p].append(symmetric(RTE, seed, a, b))
            else:
                preds[p].append(order_sensitive(RTE, seed, text))
    n = len(data)
    same = lambda x, y: sum(1 for i in range(n) if x[i] == y[i]) / n
    return {
        "seed": seed,
        "acc_val": sum(1 for i in range(n) if preds["original"][i] == data[i][2]) / n,
        "c_reverse": same(preds["original"], preds["reverse"]),
        "c_signal": same(preds["original"], preds["signal"]),
    }


if __name__ == "__main__":
    data = rows()
    assert len(data) == 1000
    out = {k: [run(k, s, data) for s in range(5)] for k in ("order_sensitive", "symmetric")}
    print(json.dumps(out, indent=1))
