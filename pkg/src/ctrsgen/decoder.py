"""Attention decoder with query-aware and contrast-based attention."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import BOS, EOS
from .encoders import EncoderOutputs
from .params import ModelParams
from .tensor import (
    ShapeError,
    Tensor,
    add,
    concat,
    embedding_lookup,
    gru,
    masked_softmax,
    matmul,
    max_over_axis,
    mul,
    no_grad,
    reshape,
    scale,
    sub,
    tanh,
    transpose,
)


@dataclass
class DecoderState:
    h: Tensor  # [S]
    step: int = 0
    query_context: Tensor | None = None
    doc_context: Tensor | None = None
    alpha_q: np.ndarray | None = None
    alpha_r: np.ndarray | None = None
    beta: np.ndarray | None = None
    beta_hat: np.ndarray | None = None


@dataclass
class DecoderContext:
    """Per-instance projections that do not change across decoding steps."""

    enc: EncoderOutputs
    query_keys: Tensor  # h_c^q W1, [C, S]
    sentence_keys: Tensor  # h_u^r W2, [U, S]
    sentence_sim: Tensor  # h_u^r W5, [U, S]
    irrelevant_max: Tensor | None  # [U], max over irrelevant sentences of the normalised similarity
    lam: float = 0.5
    irrelevant_sim: Tensor | None = field(default=None, repr=False)


def init_state(query_repr: Tensor, mega_repr: Tensor, params: ModelParams) -> Tensor:
    return add(matmul(query_repr, params["dec_Wq"]), matmul(mega_repr, params["dec_Wr"]))


def irrelevant_similarity(mega_states: Tensor, irrelevant_states: Tensor, params: ModelParams) -> Tensor:
    """For each relevant sentence, softmax over all irrelevant sentences of
    tanh(h_u W6 h_nt).  Shape ``[U, total irrelevant sentences]``."""
    raw = matmul(matmul(mega_states, params["con_W6"]), transpose(irrelevant_states))
    return masked_softmax(tanh(raw))


def prepare(enc: EncoderOutputs, params: ModelParams, lam: float = 0.5) -> DecoderContext:
    irr = enc.irrelevant_flat
    sim = max_sim = None
    if irr is not None and irr.shape[0] > 0:
        sim = irrelevant_similarity(enc.mega_states, irr, params)
        max_sim = max_over_axis(sim, axis=1)
    return DecoderContext(
        enc=enc,
        query_keys=matmul(enc.query_states, params["att_W1"]),
        sentence_keys=matmul(enc.mega_states, params["att_W2"]),
        sentence_sim=matmul(enc.mega_states, params["con_W5"]),
        irrelevant_max=max_sim,
        lam=lam,
        irrelevant_sim=sim,
    )


def query_context(h_prev: Tensor, ctx: DecoderContext) -> tuple[Tensor, Tensor]:
    alpha = masked_softmax(matmul(ctx.query_keys, h_prev), ctx.enc.query_mask)
    return alpha, matmul(alpha, ctx.enc.query_states)


def relevant_attention(h_prev: Tensor, c_q: Tensor, ctx: DecoderContext, params: ModelParams) -> Tensor:
    step_term = add(matmul(c_q, params["att_W3"]), matmul(h_prev, params["att_W4"]))
    scores = matmul(tanh(add(ctx.sentence_keys, step_term)), params["att_v"])
    return masked_softmax(scores, ctx.enc.sentence_mask)


def contrast_scores(h_prev: Tensor, ctx: DecoderContext) -> tuple[Tensor, Tensor]:
    """Returns ``(beta_hat, beta)`` over the mega-document sentences."""
    lam = ctx.lam
    sim_y = matmul(ctx.sentence_sim, h_prev)
    beta_hat = scale(sim_y, lam)
    if ctx.irrelevant_max is not None and lam < 1.0:
        beta_hat = sub(beta_hat, scale(ctx.irrelevant_max, 1.0 - lam))
    return beta_hat, masked_softmax(beta_hat, ctx.enc.sentence_mask)


def doc_context(alpha_r: Tensor, beta: Tensor, mega_states: Tensor) -> Tensor:
    return matmul(mul(beta, alpha_r), mega_states)


def _check_token(token_id: int, params: ModelParams) -> None:
    V = params["embedding"].shape[0]
    if not 0 <= int(token_id) < V:
        raise ValueError(f"token id {token_id} outside vocabulary of size {V}")


def step_features(prev_token: int, state: DecoderState, ctx: DecoderContext, params: ModelParams):
    """Advance the recurrence by one token.

    Returns the new state and the pre-projection output features ``[S]``.
    """
    _check_token(prev_token, params)
    h_prev = state.h
    alpha_q, c_q = query_context(h_prev, ctx)
    alpha_r = relevant_attention(h_prev, c_q, ctx, params)
    beta_hat, beta = contrast_scores(h_prev, ctx)
    c_d = doc_context(alpha_r, beta, ctx.enc.mega_states)
    emb = embedding_lookup(params["embedding"], np.asarray([prev_token]))
    emb = reshape(emb, (emb.shape[1],))
    x = concat([emb, c_q, c_d])
    S = h_prev.shape[0]
    h = gru(reshape(x, (1, 1, x.shape[0])), reshape(h_prev, (1, S)), params["dec_W"], params["dec_U"], params["dec_b"])
    h = reshape(h, (S,))
    feats = tanh(add(matmul(concat([emb, h, c_q, c_d]), params["out_Wg"]), params["out_bg"]))
    new_state = DecoderState(h, state.step + 1, c_q, c_d, alpha_q.data, alpha_r.data, beta.data, beta_hat.data)
    return new_state, feats


def output_distribution(feats: Tensor, params: ModelParams) -> Tensor:
    """Softmax over the vocabulary; ``feats`` may be ``[S]`` or ``[Z, S]``."""
    return masked_softmax(add(matmul(feats, params["out_Wo"]), params["out_bo"]))


def decode_step(prev_token: int, state: DecoderState, ctx: DecoderContext, params: ModelParams):
    new_state, feats = step_features(prev_token, state, ctx, params)
    return new_state, output_distribution(feats, params)


def start(enc: EncoderOutputs, params: ModelParams, lam: float = 0.5) -> tuple[DecoderContext, DecoderState]:
    ctx = prepare(enc, params, lam)
    return ctx, DecoderState(init_state(enc.query_repr, enc.mega_repr, params))


def teacher_forced_distributions(enc: EncoderOutputs, target_ids, params: ModelParams, lam: float = 0.5,
                                 record: list | None = None) -> Tensor:
    """Distributions ``[Z, V]`` for predicting ``target_ids[1:]`` from the gold prefix."""
    target_ids = np.asarray(target_ids)
    if target_ids.shape[0] < 2:
        raise ShapeError("target must contain at least BOS and one more token")
    ctx, state = start(enc, params, lam)
    feats = []
    for tok in target_ids[:-1]:
        state, f = step_features(int(tok), state, ctx, params)
        feats.append(reshape(f, (1, f.shape[0])))
        if record is not None:
            record.append(state)
    return output_distribution(concat(feats, axis=0), params)


@dataclass
class _Hyp:
    tokens: list[int]
    logp: float
    state: DecoderState
    done: bool = False
    trail: list = field(default_factory=list)

    def score(self) -> float:
        n = len(self.tokens) + (1 if self.done else 0)
        return self.logp / max(n, 1)


def generate(enc: EncoderOutputs, params: ModelParams, max_len: int, beam_width: int = 1, lam: float = 0.5,
             record: list | None = None) -> list[int]:
    """Decode token ids (without BOS/EOS) starting from BOS.

    Greedy (``beam_width=1``) takes the argmax at each step, ties to the
    lowest id.  Wider beams rank hypotheses by log-probability divided by
    length (EOS counted).  ``record`` receives the decoder states of the
    returned hypothesis.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    with no_grad():
        ctx, state0 = start(enc, params, lam)
        if beam_width == 1:
            return _greedy(ctx, state0, params, max_len, record)
        return _beam(ctx, state0, params, max_len, beam_width, record)


def _greedy(ctx, state, params, max_len, record):
    out, prev = [], BOS
    for _ in range(max_len):
        state, dist = decode_step(prev, state, ctx, params)
        if record is not None:
            record.append(state)
        prev = int(np.argmax(dist.data))
        if prev == EOS:
            break
        out.append(prev)
    return out


def _beam(ctx, state0, params, max_len, width, record):
    beams = [_Hyp([], 0.0, state0)]
    finished: list[_Hyp] = []
    for _ in range(max_len):
        cands = []
        for hyp in beams:
            prev = hyp.tokens[-1] if hyp.tokens else BOS
            state, dist = decode_step(prev, hyp.state, ctx, params)
            logp = np.log(np.maximum(dist.data.astype(np.float64), 1e-300))
            for tok in np.argsort(-logp, kind="stable")[:width]:
                tok = int(tok)
                done = tok == EOS
                tokens = hyp.tokens if done else hyp.tokens + [tok]
                cands.append(_Hyp(tokens, hyp.logp + float(logp[tok]), state, done, hyp.trail + [state]))
        cands.sort(key=lambda h: -h.score())
        beams = []
        for hyp in cands[:width]:
            (finished if hyp.done else beams).append(hyp)
        if not beams:
            break
    best = max(finished + beams, key=lambda h: h.score())
    if record is not None:
        record.extend(best.trail)
    return best.tokens


def attention_rows(states: list[DecoderState]) -> list[tuple[int, int, float, float, float]]:
    """``(step, sentence_index, alpha_r, beta, alpha_r * beta)`` per step and sentence."""
    rows = []
    for st in states:
        for u, (a, b) in enumerate(zip(st.alpha_r, st.beta)):
            rows.append((st.step, u, float(a), float(b), float(a) * float(b)))
    return rows


def write_attention_tsv(states: list[DecoderState], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step\tsentence_index\talpha_r\tbeta\tproduct\n")
        for step, u, a, b, p in attention_rows(states):
            fh.write(f"{step}\t{u}\t{a:.8g}\t{b:.8g}\t{p:.8g}\n")
