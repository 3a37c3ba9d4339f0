"""Quadruple corpora: loading, preprocessing, vocabulary and id encoding."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

PAD, UNK, BOS, EOS = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<unk>", "<s>", "</s>")

_HAS_LETTER = re.compile(r"[a-z]")


class CorpusError(ValueError):
    """Malformed corpus line or an instance that violates the quadruple contract."""


Sentence = tuple[str, ...]
Document = tuple[Sentence, ...]


@dataclass(frozen=True)
class Quadruple:
    query: Sentence
    relevant_docs: tuple[Document, ...]
    irrelevant_docs: tuple[Document, ...]
    description: Sentence
    meta: dict = field(default_factory=dict, hash=False, compare=False)
    qid: str = ""

    def __post_init__(self):
        if not self.relevant_docs:
            raise CorpusError(f"quadruple {self.qid!r} has no relevant documents")

    @property
    def num_relevant_sentences(self) -> int:
        return sum(len(d) for d in self.relevant_docs)


@dataclass(frozen=True)
class LengthCaps:
    query: int = 20
    sentence: int = 50
    sentences: int = 240
    description: int = 60

    def __post_init__(self):
        for name in ("query", "sentence", "sentences", "description"):
            if getattr(self, name) < 1:
                raise ValueError(f"length cap {name} must be positive")


def preprocess_text(raw: str) -> list[str]:
    """Whitespace-split and lower-case; drop tokens without an ASCII letter.

    Pure-digit tokens have no letter, so they are dropped by the same rule.
    """
    return [tok for tok in raw.lower().split() if _HAS_LETTER.search(tok)]


def _parse_docs(value, lineno: int, key: str) -> tuple[Document, ...]:
    if not isinstance(value, list):
        raise CorpusError(f"line {lineno}: {key!r} must be a list of documents")
    docs = []
    for doc in value:
        if not isinstance(doc, list) or not all(isinstance(s, str) for s in doc):
            raise CorpusError(f"line {lineno}: each {key!r} document must be a list of sentence strings")
        sents = tuple(tuple(toks) for toks in map(preprocess_text, doc) if toks)
        if sents:
            docs.append(sents)
    return tuple(docs)


def parse_line(line: str, lineno: int = 1) -> Quadruple:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusError(f"line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise CorpusError(f"line {lineno}: expected a JSON object")
    for key in ("query", "relevant", "description"):
        if key not in obj:
            raise CorpusError(f"line {lineno}: missing field {key!r}")
    if not isinstance(obj["query"], str) or not isinstance(obj["description"], str):
        raise CorpusError(f"line {lineno}: 'query' and 'description' must be strings")
    relevant = _parse_docs(obj["relevant"], lineno, "relevant")
    if not relevant:
        raise CorpusError(f"line {lineno}: instance rejected, no relevant documents after preprocessing")
    irrelevant = _parse_docs(obj.get("irrelevant", []), lineno, "irrelevant")
    meta = obj.get("meta") or {}
    if not isinstance(meta, dict):
        raise CorpusError(f"line {lineno}: 'meta' must be an object")
    meta = {str(k): str(v) for k, v in meta.items()}
    return Quadruple(
        query=tuple(preprocess_text(obj["query"])),
        relevant_docs=relevant,
        irrelevant_docs=irrelevant,
        description=tuple(preprocess_text(obj["description"])),
        meta=meta,
        qid=str(obj.get("id", meta.get("id", lineno))),
    )


def load_corpus(path: str | Path) -> list[Quadruple]:
    corpus = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                corpus.append(parse_line(line, lineno))
    return corpus


def quadruple_to_json(q: Quadruple) -> dict:
    """Inverse of :func:`parse_line` on already-preprocessed text."""
    obj = {
        "id": q.qid,
        "query": " ".join(q.query),
        "relevant": [[" ".join(s) for s in d] for d in q.relevant_docs],
        "irrelevant": [[" ".join(s) for s in d] for d in q.irrelevant_docs],
        "description": " ".join(q.description),
    }
    if q.meta:
        obj["meta"] = dict(q.meta)
    return obj


def write_corpus(corpus: Iterable[Quadruple], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for q in corpus:
            fh.write(json.dumps(quadruple_to_json(q), sort_keys=True) + "\n")


class Vocabulary:
    """Token/id map; the four special tokens take ids 0-3."""

    def __init__(self, tokens: Sequence[str], max_size: int | None = None):
        self.id_to_token: list[str] = list(SPECIAL_TOKENS) + [t for t in tokens if t not in SPECIAL_TOKENS]
        self.token_to_id: dict[str, int] = {t: i for i, t in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("vocabulary tokens must be unique")
        self.max_size = max_size if max_size is not None else len(self.id_to_token) - len(SPECIAL_TOKENS)

    pad, unk, bos, eos = PAD, UNK, BOS, EOS

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def encode(self, tokens: Iterable[str]) -> list[int]:
        get = self.token_to_id.get
        return [get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int], strip_special: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip_special and i < len(SPECIAL_TOKENS):
                if i == EOS:
                    break
                continue
            out.append(self.id_to_token[i])
        return out

    def to_json(self) -> dict:
        return {"max_size": self.max_size, "tokens": self.id_to_token[len(SPECIAL_TOKENS):]}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocabulary":
        return cls(obj["tokens"], obj.get("max_size"))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def token_counts(corpus: Iterable[Quadruple], include_descriptions: bool = True) -> Counter:
    counts: Counter = Counter()
    for q in corpus:
        counts.update(q.query)
        for doc in q.relevant_docs + q.irrelevant_docs:
            for sent in doc:
                counts.update(sent)
        if include_descriptions:
            counts.update(q.description)
    for tok in SPECIAL_TOKENS:
        counts.pop(tok, None)
    return counts


def build_vocabulary(corpus: Sequence[Quadruple], max_size: int = 120000, include_descriptions: bool = True) -> Vocabulary:
    """Keep the ``max_size`` most frequent tokens; ties go to the
    lexicographically smaller token."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    counts = token_counts(corpus, include_descriptions)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return Vocabulary([t for t, _ in ranked[:max_size]], max_size)


@dataclass
class EncodedQuadruple:
    """Id arrays for one instance.

    ``mega_doc`` is ``[U, L]`` with ``word_mask`` of the same shape and
    ``sentence_mask`` of shape ``[U]``; each irrelevant document is a pair
    ``(ids [T_n, L_n], word_mask)``.  Masks are 1 on real positions and 0 on
    padding.
    """

    query_ids: np.ndarray
    query_mask: np.ndarray
    mega_doc: np.ndarray
    word_mask: np.ndarray
    sentence_mask: np.ndarray
    irrelevant: list[tuple[np.ndarray, np.ndarray]]
    target_ids: np.ndarray
    qid: str = ""
    meta: dict = field(default_factory=dict)
    num_relevant_sentences: int = 0

    @property
    def num_sentences(self) -> int:
        return int(self.sentence_mask.sum())

    @property
    def has_irrelevant(self) -> bool:
        return len(self.irrelevant) > 0

    def without_irrelevant(self) -> "EncodedQuadruple":
        return EncodedQuadruple(
            self.query_ids, self.query_mask, self.mega_doc, self.word_mask, self.sentence_mask,
            [], self.target_ids, self.qid, dict(self.meta), self.num_relevant_sentences,
        )


def _pad_sentences(sents: Sequence[list[int]], width: int | None = None, rows: int | None = None):
    rows = len(sents) if rows is None else rows
    width = max((len(s) for s in sents), default=1) if width is None else width
    ids = np.full((rows, max(width, 1)), PAD, dtype=np.int64)
    mask = np.zeros(ids.shape, dtype=np.float32)
    for i, s in enumerate(sents):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


def encode_quadruple(quad: Quadruple, vocab: Vocabulary, caps: LengthCaps = LengthCaps()) -> EncodedQuadruple:
    query = vocab.encode(quad.query[: caps.query])
    if not query:
        raise CorpusError(f"quadruple {quad.qid!r}: empty query")
    mega = [vocab.encode(s[: caps.sentence]) for d in quad.relevant_docs for s in d][: caps.sentences]
    ids, wmask = _pad_sentences(mega)
    irrelevant = []
    for doc in quad.irrelevant_docs:
        sents = [vocab.encode(s[: caps.sentence]) for s in doc][: caps.sentences]
        irrelevant.append(_pad_sentences(sents))
    target = [BOS] + vocab.encode(quad.description[: caps.description]) + [EOS]
    return EncodedQuadruple(
        query_ids=np.asarray(query, dtype=np.int64),
        query_mask=np.ones(len(query), dtype=np.float32),
        mega_doc=ids,
        word_mask=wmask,
        sentence_mask=np.ones(len(mega), dtype=np.float32),
        irrelevant=irrelevant,
        target_ids=np.asarray(target, dtype=np.int64),
        qid=quad.qid,
        meta=dict(quad.meta),
        num_relevant_sentences=quad.num_relevant_sentences,
    )


def pad_encoded(enc: EncodedQuadruple, query_len: int | None = None, sentences: int | None = None,
                sentence_len: int | None = None) -> EncodedQuadruple:
    """Pad an encoded instance to fixed sizes; masks mark the new positions as padding."""
    C = len(enc.query_ids)
    qlen = max(query_len or C, C)
    q = np.full(qlen, PAD, dtype=np.int64)
    q[:C] = enc.query_ids
    qm = np.zeros(qlen, dtype=np.float32)
    qm[:C] = enc.query_mask
    U, L = enc.mega_doc.shape
    rows, width = max(sentences or U, U), max(sentence_len or L, L)
    ids = np.full((rows, width), PAD, dtype=np.int64)
    ids[:U, :L] = enc.mega_doc
    wm = np.zeros((rows, width), dtype=np.float32)
    wm[:U, :L] = enc.word_mask
    sm = np.zeros(rows, dtype=np.float32)
    sm[:U] = enc.sentence_mask
    return EncodedQuadruple(q, qm, ids, wm, sm, list(enc.irrelevant), enc.target_ids, enc.qid,
                            dict(enc.meta), enc.num_relevant_sentences)


def split_corpus(corpus: Sequence, seed: int, sizes: tuple[int, int, int]) -> tuple[list, list, list]:
    """Seeded shuffle, then consecutive slices of the given sizes."""
    if any(s < 0 for s in sizes):
        raise ValueError("split sizes must be non-negative")
    if sum(sizes) > len(corpus):
        raise ValueError(f"split sizes {sizes} exceed corpus size {len(corpus)}")
    order = np.random.default_rng(seed).permutation(len(corpus))
    out, start = [], 0
    for size in sizes:
        out.append([corpus[i] for i in order[start : start + size]])
        start += size
    return out[0], out[1], out[2]


def corpus_stats(corpus: Sequence[Quadruple]) -> dict:
    """Summary comparable to a dataset statistics table."""
    n = len(corpus)
    if n == 0:
        return {"queries": 0}
    rel_docs = [d for q in corpus for d in q.relevant_docs]
    irr_docs = [d for q in corpus for d in q.irrelevant_docs]
    return {
        "queries": n,
        "query_avg_words": float(np.mean([len(q.query) for q in corpus])),
        "query_avg_relevant_docs": float(np.mean([len(q.relevant_docs) for q in corpus])),
        "query_avg_irrelevant_docs": float(np.mean([len(q.irrelevant_docs) for q in corpus])),
        "queries_without_irrelevant": sum(1 for q in corpus if not q.irrelevant_docs),
        "relevant_doc_avg_sentences": float(np.mean([len(d) for d in rel_docs])),
        "irrelevant_doc_avg_sentences": float(np.mean([len(d) for d in irr_docs])) if irr_docs else 0.0,
        "description_avg_words": float(np.mean([len(q.description) for q in corpus])),
    }
