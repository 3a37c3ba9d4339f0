"""Query, relevant mega-document and irrelevant-document encoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import EncodedQuadruple
from .params import ModelParams
from .tensor import (
    ShapeError,
    Tensor,
    concat,
    embedding_lookup,
    gru,
    index,
    masked_softmax,
    matmul,
    mul,
    reshape,
)


@dataclass
class EncoderOutputs:
    query_states: Tensor  # [C, 2H], zero on padded positions
    query_mask: np.ndarray  # [C]
    query_repr: Tensor  # [2H]
    mega_states: Tensor  # [U, 2H]
    sentence_mask: np.ndarray  # [U]
    gamma: Tensor  # [U]
    mega_repr: Tensor  # [2H]
    irrelevant_states: list[Tensor]  # one [T_n, 2H] block per document

    @property
    def irrelevant_flat(self) -> Tensor | None:
        if not self.irrelevant_states:
            return None
        if len(self.irrelevant_states) == 1:
            return self.irrelevant_states[0]
        return concat(self.irrelevant_states, axis=0)


def _gru_args(params: ModelParams, prefix: str, direction: str):
    return (params[f"{prefix}_{direction}_W"], params[f"{prefix}_{direction}_U"], params[f"{prefix}_{direction}_b"])


def bigru(seq: Tensor, params: ModelParams, prefix: str, mask=None) -> tuple[Tensor, Tensor]:
    """Bidirectional GRU over ``seq`` of shape ``[B, T, D]`` from zero states.

    Returns per-step states ``[B, T, 2H]`` (zero where masked) and the final
    states ``[B, 2H]``: the forward state after the last real position
    joined with the backward state after the first.
    """
    if seq.data.ndim != 3:
        raise ShapeError(f"bigru: expected [B, T, D], got {seq.shape}")
    B, T, _ = seq.shape
    if T == 0:
        raise ShapeError("bigru: empty sequence")
    H = params[f"{prefix}_fwd_U"].shape[0]
    m = np.ones((B, T), dtype=seq.dtype) if mask is None else np.asarray(mask, dtype=seq.dtype).reshape(B, T)
    h0 = Tensor(np.zeros((B, H), dtype=seq.dtype), dtype=seq.dtype)
    fwd = gru(seq, h0, *_gru_args(params, prefix, "fwd"), mask=m)
    bwd = gru(seq, h0, *_gru_args(params, prefix, "bwd"), mask=m, reverse=True)
    steps = mul(concat([fwd, bwd], axis=2), Tensor(m[:, :, None], dtype=seq.dtype))
    final = concat([index(fwd, (slice(None), T - 1)), index(bwd, (slice(None), 0))], axis=1)
    return steps, final


def encode_query(query_ids, params: ModelParams, mask=None, prefix: str = "query") -> tuple[Tensor, Tensor]:
    ids = np.asarray(query_ids, dtype=np.int64)
    if ids.size == 0:
        raise ShapeError("encode_query: empty query")
    if prefix not in ("query", "word") or f"{prefix}_fwd_W" not in params:
        prefix = "word"
    emb = embedding_lookup(params["embedding"], ids)
    steps, final = bigru(reshape(emb, (1,) + emb.shape), params, prefix, None if mask is None else mask[None, :])
    C = ids.shape[0]
    return reshape(steps, (C, steps.shape[2])), reshape(final, (final.shape[1],))


def _sentence_embeddings(sent_ids: np.ndarray, word_mask: np.ndarray, params: ModelParams, prefix: str) -> Tensor:
    emb = embedding_lookup(params["embedding"], sent_ids)  # [S, L, E]
    _, final = bigru(emb, params, prefix, word_mask)
    return final


def encode_relevant(mega_doc, word_mask, sentence_mask, params: ModelParams, query_repr: Tensor):
    """Hierarchical encoding of the mega-document with query-aware pooling.

    Returns ``(sentence states [U, 2H], gamma [U], mega-document repr [2H])``.
    """
    mega_doc = np.asarray(mega_doc, dtype=np.int64)
    if mega_doc.ndim != 2 or mega_doc.shape[0] == 0:
        raise ShapeError("encode_relevant: mega-document has no sentences")
    sentence_mask = np.asarray(sentence_mask)
    if not (sentence_mask > 0).any():
        raise ShapeError("encode_relevant: every sentence is masked")
    e = _sentence_embeddings(mega_doc, word_mask, params, "word")  # [U, 2H]
    U = e.shape[0]
    states, _ = bigru(reshape(e, (1,) + e.shape), params, "sent", sentence_mask[None, :])
    states = reshape(states, (U, states.shape[2]))
    scores = matmul(states, matmul(query_repr, params["enc_Q"]))
    gamma = masked_softmax(scores, sentence_mask)
    return states, gamma, matmul(gamma, states)


def encode_irrelevant(irrelevant_docs, params: ModelParams) -> list[Tensor]:
    """Encode each irrelevant document on its own; no state crosses documents."""
    if not irrelevant_docs:
        return []
    word_prefix = "irr_word" if "irr_word_fwd_W" in params else "word"
    sent_prefix = "irr_sent" if "irr_sent_fwd_W" in params else "sent"
    width = max(ids.shape[1] for ids, _ in irrelevant_docs)
    counts = [ids.shape[0] for ids, _ in irrelevant_docs]
    all_ids = np.zeros((sum(counts), width), dtype=np.int64)
    all_mask = np.zeros(all_ids.shape, dtype=np.float32)
    row = 0
    for ids, wm in irrelevant_docs:
        all_ids[row : row + ids.shape[0], : ids.shape[1]] = ids
        all_mask[row : row + ids.shape[0], : ids.shape[1]] = wm
        row += ids.shape[0]
    e = _sentence_embeddings(all_ids, all_mask, params, word_prefix)  # [sum T_n, 2H]
    N, T = len(counts), max(counts)
    gather = np.zeros((N, T), dtype=np.int64)
    smask = np.zeros((N, T), dtype=np.float32)
    offsets = np.concatenate([[0], np.cumsum(counts)[:-1]])
    for n, (off, cnt) in enumerate(zip(offsets, counts)):
        gather[n, :cnt] = np.arange(off, off + cnt)
        smask[n, :cnt] = 1.0
    batch = index(e, gather)  # [N, T, 2H]; padded slots reuse row 0 and are masked
    states, _ = bigru(batch, params, sent_prefix, smask)
    return [index(states, (n, slice(0, cnt))) for n, cnt in enumerate(counts)]


def encode(enc: EncodedQuadruple, params: ModelParams) -> EncoderOutputs:
    qprefix = "query" if "query_fwd_W" in params else "word"
    q_states, x_q = encode_query(enc.query_ids, params, enc.query_mask, qprefix)
    states, gamma, x_r = encode_relevant(enc.mega_doc, enc.word_mask, enc.sentence_mask, params, x_q)
    irr = encode_irrelevant(enc.irrelevant, params)
    return EncoderOutputs(q_states, np.asarray(enc.query_mask), x_q, states,
                          np.asarray(enc.sentence_mask), gamma, x_r, irr)
