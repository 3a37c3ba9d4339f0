"""Learned parameters of the model and their initialisation."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .corpus import Vocabulary
from .tensor import Tensor

ModelParams = dict  # name -> Tensor, insertion order is the canonical manifest order


def _gru_shapes(prefix: str, inp: int, hidden: int) -> list[tuple[str, tuple[int, ...]]]:
    out = []
    for direction in ("fwd", "bwd"):
        out += [
            (f"{prefix}_{direction}_W", (inp, 3 * hidden)),
            (f"{prefix}_{direction}_U", (hidden, 3 * hidden)),
            (f"{prefix}_{direction}_b", (3 * hidden,)),
        ]
    return out


def param_shapes(vocab_size: int, embedding_dim: int, hidden: int, tie_doc_encoders: bool = True,
                 query_shares_word_encoder: bool = False) -> list[tuple[str, tuple[int, ...]]]:
    E, H = embedding_dim, hidden
    D = 2 * H  # bidirectional state width
    S = D  # decoder state width
    shapes = [("embedding", (vocab_size, E))]
    if not query_shares_word_encoder:
        shapes += _gru_shapes("query", E, H)
    shapes += _gru_shapes("word", E, H)
    shapes += _gru_shapes("sent", D, H)
    if not tie_doc_encoders:
        shapes += _gru_shapes("irr_word", E, H)
        shapes += _gru_shapes("irr_sent", D, H)
    shapes += [
        ("enc_Q", (D, D)),
        ("dec_Wq", (D, S)),
        ("dec_Wr", (D, S)),
        ("dec_W", (E + 2 * D, 3 * S)),
        ("dec_U", (S, 3 * S)),
        ("dec_b", (3 * S,)),
        ("att_W1", (D, S)),
        ("att_W2", (D, S)),
        ("att_W3", (D, S)),
        ("att_W4", (S, S)),
        ("att_v", (S,)),
        ("con_W5", (D, S)),
        ("con_W6", (D, D)),
        ("out_Wg", (E + S + 2 * D, S)),
        ("out_bg", (S,)),
        ("out_Wo", (S, vocab_size)),
        ("out_bo", (vocab_size,)),
    ]
    return shapes


def is_bias(name: str) -> bool:
    return name.endswith("_b") or name in ("out_bg", "out_bo")


def init_params(vocab_size: int, embedding_dim: int = 300, hidden: int = 256, init_range: float = 0.1,
                seed: int = 1, tie_doc_encoders: bool = True, query_shares_word_encoder: bool = False,
                dtype=np.float32) -> ModelParams:
    """Weights uniform in [-init_range, init_range]; biases zero."""
    rng = np.random.default_rng(seed)
    params: ModelParams = {}
    for name, shape in param_shapes(vocab_size, embedding_dim, hidden, tie_doc_encoders, query_shares_word_encoder):
        if is_bias(name):
            data = np.zeros(shape)
        else:
            data = rng.uniform(-init_range, init_range, size=shape)
        params[name] = Tensor(data.astype(dtype), requires_grad=True, dtype=dtype, name=name)
    return params


def params_from_config(cfg, vocab_size: int, dtype=np.float32) -> ModelParams:
    return init_params(vocab_size, cfg.embedding_dim, cfg.hidden, cfg.init_range, cfg.seed,
                       cfg.tie_doc_encoders, cfg.query_shares_word_encoder, dtype)


def cast_params(params: ModelParams, dtype) -> ModelParams:
    return {k: v.astype(dtype) for k, v in params.items()}


def copy_params(params: ModelParams) -> ModelParams:
    return {k: Tensor(v.data.copy(), requires_grad=v.requires_grad, dtype=v.dtype, name=k) for k, v in params.items()}


def zero_grads(params: ModelParams) -> None:
    for p in params.values():
        p.zero_grad()


def dims(params: ModelParams) -> tuple[int, int, int]:
    """(vocab size, embedding dim, hidden size H)."""
    V, E = params["embedding"].shape
    return V, E, params["word_fwd_U"].shape[0]


def load_embeddings(path: str | Path, vocab: Vocabulary, params: ModelParams) -> int:
    """Overwrite embedding rows from a ``token v1 ... vE`` text file.

    Returns the number of vocabulary rows that were replaced.
    """
    table = params["embedding"].data
    E = table.shape[1]
    hits = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) == 2 and lineno == 1:
                continue  # word2vec text header "count dim"
            if len(parts) != E + 1:
                raise ValueError(f"{path}:{lineno}: expected token and {E} values, got {len(parts) - 1}")
            idx = vocab.token_to_id.get(parts[0])
            if idx is None:
                continue
            table[idx] = np.asarray(parts[1:], dtype=table.dtype)
            hits += 1
    return hits
