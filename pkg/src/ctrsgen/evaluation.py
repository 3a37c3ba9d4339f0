"""ROUGE recall scoring and sliced corpus reports."""

from __future__ import annotations

import csv
import json
import os
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import LengthCaps, Quadruple, Vocabulary, encode_quadruple

METRICS = ("rouge1_recall", "rouge2_recall", "rougeL_recall")
SLICE_KEYS = ("query_type", "irrelevant", "sentences")
SENTENCE_BINS = (40, 80, 120, 160, 200, 240)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> float:
    """Clipped n-gram overlap divided by the reference n-gram count."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(reference) < n:
        raise ValueError(f"reference has {len(reference)} tokens, fewer than n={n}")
    ref = _ngrams(reference, n)
    overlap = sum((_ngrams(candidate, n) & ref).values())
    return overlap / sum(ref.values())


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    if not reference:
        raise ValueError("empty reference")
    return lcs_length(candidate, reference) / len(reference)


def score_pair(candidate: Sequence[str], reference: Sequence[str]) -> dict[str, float]:
    """All three recalls; a reference too short for bigrams scores 0 on ROUGE-2."""
    return {
        "rouge1_recall": rouge_n(candidate, reference, 1),
        "rouge2_recall": rouge_n(candidate, reference, 2) if len(reference) >= 2 else 0.0,
        "rougeL_recall": rouge_l(candidate, reference),
    }


def sentence_bin(count: int) -> str:
    if count < SENTENCE_BINS[0]:
        return f"<{SENTENCE_BINS[0]}"
    for lo, hi in zip(SENTENCE_BINS, SENTENCE_BINS[1:]):
        if lo <= count < hi:
            return f"{lo}-{hi}"
    return f">{SENTENCE_BINS[-1]}"


def slice_value(key: str, quad: Quadruple) -> str:
    if key == "query_type":
        return quad.meta.get("query_type", "unknown")
    if key == "irrelevant":
        return "with" if quad.irrelevant_docs else "without"
    if key == "sentences":
        return sentence_bin(quad.num_relevant_sentences)
    raise ValueError(f"unknown slice key {key!r}; expected one of {SLICE_KEYS}")


@dataclass
class RougeReport:
    per_instance: list[dict]
    overall: dict = field(default_factory=dict)
    slices: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"overall": self.overall, "slices": self.slices, "per_instance": self.per_instance}

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def write_tsv(self, path: str | Path) -> None:
        """Flat rows ``slice_key, slice_value, count, metrics...``."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, delimiter="\t", lineterminator="\n")
            w.writerow(["slice_key", "slice_value", "count", *METRICS])
            w.writerow(["overall", "all", self.overall["count"], *(f"{self.overall[m]:.6f}" for m in METRICS)])
            for key, groups in self.slices.items():
                for value, rep in groups.items():
                    w.writerow([key, value, rep["count"], *(f"{rep[m]:.6f}" for m in METRICS)])


def _aggregate(rows: list[dict]) -> dict:
    out = {"count": len(rows)}
    for m in METRICS:
        out[m] = float(np.mean([r[m] for r in rows])) if rows else 0.0
    return out


def build_report(quads: Sequence[Quadruple], candidates: Sequence[Sequence[str]],
                 slice_keys: Sequence[str] = SLICE_KEYS) -> RougeReport:
    if len(quads) != len(candidates):
        raise ValueError("one candidate per quadruple required")
    rows = []
    for q, cand in zip(quads, candidates):
        row = {"id": q.qid, "candidate": " ".join(cand), "reference": " ".join(q.description)}
        row.update(score_pair(list(cand), list(q.description)))
        for key in slice_keys:
            row[key] = slice_value(key, q)
        rows.append(row)
    slices = {}
    for key in slice_keys:
        groups: dict[str, list[dict]] = {}
        for row in rows:
            groups.setdefault(row[key], []).append(row)
        slices[key] = {v: _aggregate(g) for v, g in sorted(groups.items())}
    return RougeReport(rows, _aggregate(rows), slices)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CTRSGEN_THREADS", "1")))
    except ValueError:
        return 1


def generate_descriptions(quads: Sequence[Quadruple], params, vocab: Vocabulary, caps: LengthCaps,
                          lam: float = 0.5, beam_width: int = 1, max_len: int | None = None) -> list[list[str]]:
    from .decoder import generate
    from .encoders import encode
    from .tensor import no_grad

    max_len = max_len or caps.description

    def one(q):
        with no_grad():
            enc = encode(encode_quadruple(q, vocab, caps), params)
        return vocab.decode(generate(enc, params, max_len, beam_width, lam))

    n = _threads()
    if n == 1:
        return [one(q) for q in quads]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(one, quads))


def evaluate_corpus(checkpoint, quads: Sequence[Quadruple], slice_keys: Sequence[str] = SLICE_KEYS,
                    vocab: Vocabulary | None = None, beam_width: int | None = None) -> RougeReport:
    """Greedy-generate (or beam) each description and score it against the reference."""
    if vocab is not None and vocab != checkpoint.vocab:
        raise ValueError("vocabulary does not match the checkpoint")
    cfg = checkpoint.config
    params = checkpoint.model_params()
    cands = generate_descriptions(quads, params, checkpoint.vocab, cfg.caps, cfg.lam,
                                  beam_width or cfg.beam_width)
    return build_report(quads, cands, slice_keys)
