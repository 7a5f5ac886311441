#!/usr/bin/env python3
"""Freezes tests/data/rouge_golden.jsonl with scores from the rouge-score
package (pip install rouge-score).

Texts are ASCII so both tokenizers agree: lowercase, split on anything that is
not a letter or digit, no stemming.
"""
import json
import os
import random

from rouge_score import rouge_scorer

HERE = os.path.dirname(os.path.abspath(__file__))
OUT = os.path.join(HERE, "..", "data", "rouge_golden.jsonl")

WORDS = ("a the of and device method system light display unit layer substrate "
         "Organic EMITTING circuit 1 2 42 claim wherein said first second").split()
SEPS = [" ", " ", " ", ", ", "-", "; ", ".", "  ", "\n", "/", "(", ")"]


def text(rng):
    n = rng.randint(0, 14)
    parts = []
    for _ in range(n):
        w = rng.choice(WORDS)
        if rng.random() < 0.2:
            w = w.upper()
        parts.append(w)
        parts.append(rng.choice(SEPS))
    return "".join(parts).strip(" ")


def main():
    rng = random.Random(20240501)
    scorer = rouge_scorer.RougeScorer(["rouge1"], use_stemmer=False)
    cases = [
        ("Organic light emitting display unit structure",
         "Organic light emitting display unit structure and organic light emitting display unit circuit"),
        ("", ""),
        ("the the the", "the cat"),
    ]
    while len(cases) < 400:
        a = text(rng)
        # Half the pairs share words through a mutated copy.
        b = text(rng) if rng.random() < 0.5 else " ".join(
            w for w in a.split() if rng.random() < 0.7) + " " + text(rng)
        cases.append((a, b))
    with open(OUT, "w") as f:
        for pred, actual in cases:
            s = scorer.score(actual, pred)["rouge1"]
            f.write(json.dumps({"predicted": pred, "actual": actual,
                                "p": 100 * s.precision, "r": 100 * s.recall,
                                "f1": 100 * s.fmeasure}) + "\n")


if __name__ == "__main__":
    main()
