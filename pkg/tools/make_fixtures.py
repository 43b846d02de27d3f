#!/usr/bin/env python3
"""Regenerate the committed fixture files deterministically.

The DNA-length-8 score table mimics a binding-activity landscape: most
sequences score low, a thin tail reaches toward 1.  Scores are i.i.d.
draws from a fixed-seed generator, assigned in lexicographic sequence
order, so the file is reproducible byte for byte.
"""

import itertools
import os

import numpy as np

HERE = os.path.dirname(os.path.abspath(__file__))
FIXTURES = os.path.join(HERE, "..", "fixtures")

ALPHABET = "ACGT"
LENGTH = 8
SEED = 20240811


def dna8_scores() -> dict:
    rng = np.random.default_rng(SEED)
    seqs = ["".join(p) for p in itertools.product(ALPHABET, repeat=LENGTH)]
    bulk = rng.beta(2.0, 8.0, size=len(seqs))
    spikes = rng.random(len(seqs)) < 0.002
    highs = rng.uniform(0.85, 1.0, size=len(seqs))
    scores = np.where(spikes, highs, bulk)
    return dict(zip(seqs, scores))


def main():
    os.makedirs(FIXTURES, exist_ok=True)
    scores = dna8_scores()
    path = os.path.join(FIXTURES, "dna8_scores.tsv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# DNA length-8 synthetic binding scores\n")
        for seq in sorted(scores):
            fh.write(f"{seq}\t{format(scores[seq], '.17g')}\n")
    print(f"wrote {path} ({len(scores)} rows)")


if __name__ == "__main__":
    main()
