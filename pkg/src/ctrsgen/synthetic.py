"""Seeded toy corpora for tests, demos and benchmarks.

``python -m ctrsgen.synthetic OUT.jsonl [--n N] [--seed S]`` writes one.
"""

from __future__ import annotations

import argparse
import json

import numpy as np

from .corpus import Quadruple, parse_line


def make_words(count: int) -> list[str]:
    letters = "abcdefghijklmnopqrstuvwxyz"
    return [letters[i // 26 % 26] + letters[i % 26] + "x" for i in range(count)]


def make_records(n: int, seed: int = 0, words: int = 48, relevant_docs=(1, 3), sentences=(1, 3),
                 irrelevant_docs=(0, 2), sentence_len=(3, 6), query_len=(2, 4), description_len=(3, 8),
                 empty_irrelevant_every: int = 0) -> list[dict]:
    """JSON-ready quadruple records; ranges are inclusive."""
    rng = np.random.default_rng(seed)
    vocab = make_words(words)

    def pick(lo_hi):
        return int(rng.integers(lo_hi[0], lo_hi[1] + 1))

    def text(lo_hi):
        return " ".join(rng.choice(vocab, size=pick(lo_hi)))

    def doc():
        return [text(sentence_len) for _ in range(pick(sentences))]

    out = []
    for i in range(n):
        n_irr = pick(irrelevant_docs)
        if empty_irrelevant_every and i % empty_irrelevant_every == 0:
            n_irr = 0
        out.append({
            "id": f"q{i}",
            "query": text(query_len),
            "relevant": [doc() for _ in range(pick(relevant_docs))],
            "irrelevant": [doc() for _ in range(n_irr)],
            "description": text(description_len),
            "meta": {"query_type": "question" if i % 3 else "keyword"},
        })
    return out


def make_corpus(n: int, seed: int = 0, **kwargs) -> list[Quadruple]:
    return [parse_line(json.dumps(r), i + 1) for i, r in enumerate(make_records(n, seed, **kwargs))]


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="write a synthetic quadruple corpus")
    ap.add_argument("output")
    ap.add_argument("--n", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--words", type=int, default=48)
    args = ap.parse_args(argv)
    with open(args.output, "w", encoding="utf-8") as fh:
        for rec in make_records(args.n, args.seed, args.words):
            fh.write(json.dumps(rec) + "\n")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
