import json
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctrsgen.corpus import (
    BOS,
    EOS,
    PAD,
    UNK,
    CorpusError,
    LengthCaps,
    Quadruple,
    Vocabulary,
    build_vocabulary,
    corpus_stats,
    encode_quadruple,
    load_corpus,
    pad_encoded,
    parse_line,
    preprocess_text,
    split_corpus,
    token_counts,
    write_corpus,
)
from ctrsgen.synthetic import make_corpus


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("The Cat sat 42", ["the", "cat", "sat"]),
        ("A 3D9x", ["a", "3d9x"]),
        ("100 200", []),
        ("  ", []),
        ("café ÉÉ", ["café"]),
        ("x-ray!! ... ---", ["x-ray!!"]),
    ],
)
def test_preprocess_text(raw, expected):
    assert preprocess_text(raw) == expected


@given(st.text())
def test_preprocess_tokens_are_clean(raw):
    for tok in preprocess_text(raw):
        assert tok and tok == tok.lower()
        assert any("a" <= ch <= "z" for ch in tok)


def _write(tmp_path, records):
    path = tmp_path / "c.jsonl"
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def test_load_minimal_instance(tmp_path):
    path = _write(tmp_path, [{"query": "What is X", "relevant": [["First one.", "Then 12"]], "description": "about x"}])
    (q,) = load_corpus(path)
    assert len(q.relevant_docs) == 1 and len(q.irrelevant_docs) == 0
    assert q.relevant_docs[0] == (("first", "one."), ("then",))
    assert q.query == ("what", "is", "x")


def test_load_rejects_empty_relevant(tmp_path):
    path = _write(tmp_path, [{"query": "q", "relevant": [], "description": "d"}])
    with pytest.raises(CorpusError, match="line 1"):
        load_corpus(path)


def test_load_rejects_relevant_empty_after_preprocessing(tmp_path):
    path = _write(tmp_path, [{"query": "q", "relevant": [["123 456"]], "description": "d"}])
    with pytest.raises(CorpusError, match="no relevant"):
        load_corpus(path)


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps({"query": "q", "relevant": [["a"]], "description": "d"}) + "\n{not json\n")
    with pytest.raises(CorpusError, match="line 2"):
        load_corpus(path)


def test_write_then_load_roundtrip(tmp_path):
    corpus = make_corpus(5, seed=1)
    write_corpus(corpus, tmp_path / "out.jsonl")
    again = load_corpus(tmp_path / "out.jsonl")
    assert [(q.query, q.relevant_docs, q.irrelevant_docs, q.description, q.qid) for q in again] == [
        (q.query, q.relevant_docs, q.irrelevant_docs, q.description, q.qid) for q in corpus
    ]
    assert [q.meta for q in again] == [q.meta for q in corpus]


def _quad(tokens_by_field):
    return Quadruple(query=tuple(tokens_by_field.get("q", ["q"])),
                     relevant_docs=((tuple(tokens_by_field.get("r", ["r"])),),),
                     irrelevant_docs=(), description=tuple(tokens_by_field.get("d", [])))


def test_vocabulary_top_k():
    corpus = [_quad({"q": ["a", "a", "a"], "r": ["b", "b"], "d": ["c"]})]
    vocab = build_vocabulary(corpus, max_size=2)
    assert vocab.id_to_token[4:] == ["a", "b"]
    assert vocab.id_to_token[:4] == ["<pad>", "<unk>", "<s>", "</s>"]


def test_vocabulary_lexicographic_tie():
    corpus = [_quad({"q": ["b", "a"], "r": ["a", "b"]})]
    vocab = build_vocabulary(corpus, max_size=1)
    assert vocab.id_to_token[4:] == ["a"]


def test_vocabulary_description_flag():
    corpus = [_quad({"q": ["a"], "r": ["a"], "d": ["zz", "zz", "zz"]})]
    assert "zz" in build_vocabulary(corpus, 5)
    assert "zz" not in build_vocabulary(corpus, 5, include_descriptions=False)


@settings(max_examples=50)
@given(st.lists(st.lists(st.sampled_from("abcdefgh"), min_size=1, max_size=8), min_size=1, max_size=6),
       st.integers(1, 6))
def test_vocabulary_frequency_property(sentences, k):
    corpus = [_quad({"q": s, "r": ["a"]}) for s in sentences]
    vocab = build_vocabulary(corpus, k)
    counts = token_counts(corpus)
    kept = [counts[t] for t in vocab.id_to_token[4:]]
    dropped = [c for t, c in counts.items() if t not in vocab]
    assert len(vocab) <= k + 4
    if kept and dropped:
        assert max(dropped) <= min(kept)
    # bijective over non-special ids
    assert all(vocab.token_to_id[t] == i for i, t in enumerate(vocab.id_to_token))


def test_vocabulary_save_load(tmp_path):
    vocab = Vocabulary(["x", "y"], 10)
    vocab.save(tmp_path / "v.json")
    again = Vocabulary.load(tmp_path / "v.json")
    assert again == vocab and again.max_size == 10


def test_encode_unk_and_concatenation():
    vocab = Vocabulary(["a", "b", "c"])
    docs = tuple(((f"a",), ("b", "zzz")) for _ in range(3))
    q = Quadruple(("a", "zzz"), docs, (), ("c",))
    enc = encode_quadruple(q, vocab, LengthCaps(sentences=240))
    assert enc.query_ids.tolist() == [vocab.token_to_id["a"], UNK]
    assert enc.mega_doc.shape[0] == 6 and enc.num_sentences == 6
    assert enc.mega_doc[1].tolist() == [vocab.token_to_id["b"], UNK]
    assert enc.mega_doc[0].tolist() == [vocab.token_to_id["a"], PAD]
    assert enc.word_mask[0].tolist() == [1.0, 0.0]


def test_encode_description_truncation():
    vocab = Vocabulary(["w"])
    q = Quadruple(("w",), ((("w",),),), (), ("w",) * 80)
    enc = encode_quadruple(q, vocab, LengthCaps(description=60))
    assert len(enc.target_ids) == 62
    assert enc.target_ids[0] == BOS and enc.target_ids[-1] == EOS


def test_encode_rejects_empty_query():
    vocab = Vocabulary(["w"])
    q = Quadruple((), ((("w",),),), (), ("w",))
    with pytest.raises(CorpusError):
        encode_quadruple(q, vocab)


def test_encode_roundtrip_and_masks():
    corpus = make_corpus(6, seed=2, words=30)
    vocab = build_vocabulary(corpus, 1000)
    caps = LengthCaps(query=3, sentence=4, sentences=3, description=5)
    for q in corpus:
        enc = encode_quadruple(q, vocab, caps)
        assert vocab.decode(enc.query_ids) == list(q.query[:3])
        sents = [s[:4] for d in q.relevant_docs for s in d][:3]
        assert enc.num_sentences == len(sents)
        for row, m, s in zip(enc.mega_doc, enc.word_mask, sents):
            assert vocab.decode(row[m > 0]) == list(s)
            assert (row[m == 0] == PAD).all() and m.sum() == len(s)
        assert vocab.decode(enc.target_ids) == list(q.description[:5])
        assert enc.mega_doc.max() < len(vocab)


def test_pad_encoded_marks_padding(tiny):
    _, _, enc = tiny
    padded = pad_encoded(enc, query_len=6, sentences=5, sentence_len=7)
    assert padded.query_mask.tolist() == [1, 1, 1, 0, 0, 0]
    assert padded.sentence_mask.tolist() == [1, 1, 0, 0, 0]
    assert padded.word_mask.shape == (5, 7) and padded.word_mask.sum() == enc.word_mask.sum()


def test_split_deterministic_and_disjoint():
    corpus = list(range(50))
    a = split_corpus(corpus, 3, (30, 5, 10))
    b = split_corpus(corpus, 3, (30, 5, 10))
    assert a == b
    sets = [set(x) for x in a]
    assert not (sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2])
    assert [len(x) for x in a] == [30, 5, 10]


def test_split_overflow():
    with pytest.raises(ValueError):
        split_corpus(list(range(5)), 0, (10, 0, 0))


def test_split_5000_100_258():
    train, valid, test = split_corpus(list(range(5358)), 0, (5000, 100, 258))
    assert (len(train), len(valid), len(test)) == (5000, 100, 258)
    assert len(set(train) | set(valid) | set(test)) == 5358


def test_corpus_stats():
    corpus = make_corpus(10, seed=4, empty_irrelevant_every=2)
    stats = corpus_stats(corpus)
    assert stats["queries"] == 10
    assert stats["queries_without_irrelevant"] >= 5
    assert stats["query_avg_words"] == pytest.approx(np.mean([len(q.query) for q in corpus]))
    assert stats["description_avg_words"] == pytest.approx(np.mean([len(q.description) for q in corpus]))


def test_parse_line_meta_and_id():
    q = parse_line(json.dumps({"id": "t7", "query": "a", "relevant": [["b"]], "description": "c",
                               "meta": {"query_type": "keyword"}}))
    assert q.qid == "t7" and q.meta == {"query_type": "keyword"}
