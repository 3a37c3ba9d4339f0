import numpy as np
import pytest

from ctrsgen.corpus import Quadruple, encode_quadruple
from ctrsgen.encoders import bigru, encode, encode_irrelevant, encode_query, encode_relevant
from ctrsgen.params import init_params
from ctrsgen.tensor import Tensor, backward, tsum


def sig(x):
    return 1.0 / (1.0 + np.exp(-x))


def ref_gru(xs, W, U, b):
    """Step-by-step reference GRU from a zero state, gate blocks z, r, n."""
    H = U.shape[0]
    h = np.zeros(H)
    out = []
    for x in xs:
        a = x @ W + b
        z = sig(a[:H] + h @ U[:, :H])
        r = sig(a[H : 2 * H] + h @ U[:, H : 2 * H])
        n = np.tanh(a[2 * H :] + (r * h) @ U[:, 2 * H :])
        h = (1 - z) * n + z * h
        out.append(h)
    return np.array(out)


def _params(prefix="word", D=3, H=2, seed=0, scale=0.7):
    rng = np.random.default_rng(seed)
    p = {}
    for d in ("fwd", "bwd"):
        p[f"{prefix}_{d}_W"] = Tensor(rng.normal(size=(D, 3 * H)) * scale, dtype=np.float64)
        p[f"{prefix}_{d}_U"] = Tensor(rng.normal(size=(H, 3 * H)) * scale, dtype=np.float64)
        p[f"{prefix}_{d}_b"] = Tensor(rng.normal(size=3 * H) * scale, dtype=np.float64)
    return p


def _np(p, k):
    return p[k].data


def test_bigru_three_steps_matches_reference():
    p = _params()
    xs = np.random.default_rng(1).normal(size=(3, 3))
    steps, final = bigru(Tensor(xs[None], dtype=np.float64), p, "word")
    f = ref_gru(xs, _np(p, "word_fwd_W"), _np(p, "word_fwd_U"), _np(p, "word_fwd_b"))
    b = ref_gru(xs[::-1], _np(p, "word_bwd_W"), _np(p, "word_bwd_U"), _np(p, "word_bwd_b"))[::-1]
    np.testing.assert_allclose(steps.data[0], np.concatenate([f, b], axis=1), atol=1e-12)
    np.testing.assert_allclose(final.data[0], np.concatenate([f[-1], b[0]]), atol=1e-12)


def test_zero_fixed_point():
    p = _params()
    for k in p:
        if not k.endswith("_U"):
            p[k] = Tensor(np.zeros_like(p[k].data), dtype=np.float64)
    steps, final = bigru(Tensor(np.random.default_rng(2).normal(size=(1, 4, 3)), dtype=np.float64), p, "word")
    assert np.abs(steps.data).max() == 0.0 and np.abs(final.data).max() == 0.0


def test_length_one_sequence():
    p = _params()
    x = np.array([[0.3, -0.2, 0.9]])
    steps, final = bigru(Tensor(x[None], dtype=np.float64), p, "word")
    f = ref_gru(x, _np(p, "word_fwd_W"), _np(p, "word_fwd_U"), _np(p, "word_fwd_b"))[0]
    b = ref_gru(x, _np(p, "word_bwd_W"), _np(p, "word_bwd_U"), _np(p, "word_bwd_b"))[0]
    np.testing.assert_allclose(final.data[0], np.concatenate([f, b]), atol=1e-12)
    np.testing.assert_allclose(steps.data[0, 0], final.data[0], atol=1e-12)


def test_reversal_swaps_directions():
    p = _params()
    swapped = {}
    for part in ("W", "U", "b"):
        swapped[f"word_fwd_{part}"] = p[f"word_bwd_{part}"]
        swapped[f"word_bwd_{part}"] = p[f"word_fwd_{part}"]
    xs = np.random.default_rng(3).normal(size=(1, 5, 3))
    steps, _ = bigru(Tensor(xs, dtype=np.float64), p, "word")
    rsteps, _ = bigru(Tensor(xs[:, ::-1].copy(), dtype=np.float64), swapped, "word")
    H = 2
    expect = np.concatenate([steps.data[0, ::-1, H:], steps.data[0, ::-1, :H]], axis=1)
    np.testing.assert_allclose(rsteps.data[0], expect, atol=1e-12)


def test_padding_does_not_change_real_positions():
    p = _params()
    xs = np.random.default_rng(4).normal(size=(1, 3, 3))
    padded = np.concatenate([xs, np.random.default_rng(5).normal(size=(1, 2, 3))], axis=1)
    s1, f1 = bigru(Tensor(xs, dtype=np.float64), p, "word")
    s2, f2 = bigru(Tensor(padded, dtype=np.float64), p, "word", mask=np.array([[1, 1, 1, 0, 0]]))
    np.testing.assert_allclose(s2.data[0, :3], s1.data[0], atol=1e-12)
    assert (s2.data[0, 3:] == 0).all()
    np.testing.assert_allclose(f2.data, f1.data, atol=1e-12)


def _model(vocab_size=20, seed=0, **kw):
    return init_params(vocab_size, embedding_dim=5, hidden=3, init_range=0.5, seed=seed, dtype=np.float64, **kw)


def test_single_sentence_gamma_is_one():
    params = _model()
    _, xq = encode_query(np.array([4, 5]), params)
    states, gamma, xr = encode_relevant(np.array([[6, 7, 8]]), np.ones((1, 3)), np.ones(1), params, xq)
    np.testing.assert_allclose(gamma.data, [1.0])
    np.testing.assert_allclose(xr.data, states.data[0], atol=1e-12)


def test_zero_Q_gives_uniform_gamma():
    params = _model()
    params["enc_Q"] = Tensor(np.zeros_like(params["enc_Q"].data), dtype=np.float64)
    _, xq = encode_query(np.array([4, 5]), params)
    states, gamma, xr = encode_relevant(np.array([[6, 7], [8, 0], [9, 10]]), np.array([[1, 1], [1, 0], [1, 1]]),
                                        np.ones(3), params, xq)
    np.testing.assert_allclose(gamma.data, np.full(3, 1 / 3))
    np.testing.assert_allclose(xr.data, states.data.mean(axis=0), atol=1e-12)


def test_two_sentence_gamma_by_hand():
    params = _model(seed=4)
    _, xq = encode_query(np.array([4, 5, 6]), params)
    states, gamma, xr = encode_relevant(np.array([[7, 8], [9, 10]]), np.ones((2, 2)), np.ones(2), params, xq)
    Hr, Q, q = states.data, params["enc_Q"].data, xq.data
    s = Hr @ (q @ Q)
    g = np.exp(s - s.max()) / np.exp(s - s.max()).sum()
    np.testing.assert_allclose(gamma.data, g, atol=1e-12)
    np.testing.assert_allclose(xr.data, g @ Hr, atol=1e-12)


def test_no_irrelevant_documents():
    assert encode_irrelevant([], _model()) == []


def _irr(rows):
    ids = np.array(rows, dtype=np.int64)
    return ids, (ids > 0).astype(np.float32)


def test_irrelevant_documents_are_independent_and_order_free():
    params = _model()
    d1, d2, d3 = _irr([[4, 5], [6, 0]]), _irr([[7, 8, 9]]), _irr([[10], [11], [12]])
    alone = [encode_irrelevant([d], params)[0].data for d in (d1, d2, d3)]
    together = encode_irrelevant([d1, d2, d3], params)
    for a, b in zip(alone, together):
        np.testing.assert_allclose(b.data, a, atol=1e-12)
    permuted = encode_irrelevant([d3, d1, d2], params)
    for i, j in zip((2, 0, 1), range(3)):
        np.testing.assert_allclose(permuted[j].data, alone[i], atol=1e-12)
    assert [t.shape[0] for t in together] == [2, 1, 3]


def test_untied_irrelevant_encoders_used():
    params = _model(tie_doc_encoders=False)
    assert "irr_word_fwd_W" in params and "irr_sent_fwd_W" in params
    d = _irr([[4, 5]])
    before = encode_irrelevant([d], params)[0].data.copy()
    params["word_fwd_W"].data[...] = 0
    np.testing.assert_array_equal(encode_irrelevant([d], params)[0].data, before)


def test_encode_gradients_reach_encoder_params(tiny):
    _, vocab, enc = tiny
    params = init_params(len(vocab), 5, 3, 0.5, seed=1, dtype=np.float64)
    out = encode(enc, params)
    loss = tsum(out.mega_repr) + tsum(out.irrelevant_flat) + tsum(out.query_states)
    backward(loss)
    for name in ("embedding", "query_fwd_W", "word_bwd_U", "sent_fwd_W", "enc_Q"):
        assert np.abs(params[name].grad).max() > 0, name


def test_encode_shapes(tiny):
    quad, vocab, enc = tiny
    params = init_params(len(vocab), 5, 3, 0.5, seed=1, dtype=np.float64)
    out = encode(enc, params)
    assert out.query_states.shape == (3, 6)
    assert out.mega_states.shape == (2, 6) and out.gamma.shape == (2,)
    assert [t.shape for t in out.irrelevant_states] == [(2, 6)]


def test_query_sharing_word_encoder():
    params = _model(query_shares_word_encoder=True)
    assert "query_fwd_W" not in params
    q = Quadruple(("a",), ((("b",),),), (), ("c",))
    from ctrsgen.corpus import Vocabulary

    enc = encode_quadruple(q, Vocabulary(["a", "b", "c"]))
    out = encode(enc, init_params(7, 5, 3, 0.5, seed=0, dtype=np.float64, query_shares_word_encoder=True))
    assert out.query_repr.shape == (6,)
