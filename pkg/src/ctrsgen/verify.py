"""Finite-difference checks over every primitive and the full model loss."""

from __future__ import annotations

import time

import numpy as np

from . import tensor as T
from .corpus import Quadruple, Vocabulary, encode_quadruple
from .params import init_params
from .tensor import Tensor, grad_check

TOLERANCE = 1e-5


def tiny_instance(vocab_size: int = 20) -> tuple[Quadruple, Vocabulary]:
    """Query of 3 tokens, two relevant sentences, one irrelevant document of
    two sentences; ``vocab_size`` counts the four special tokens."""
    words = [f"tok{chr(97 + i)}" for i in range(vocab_size - 4)]
    vocab = Vocabulary(words)
    quad = Quadruple(
        query=(words[0], words[1], words[2]),
        relevant_docs=(((words[3], words[4], words[5]),), ((words[6], words[7]),)),
        irrelevant_docs=(((words[8], words[9]), (words[10], words[11], words[3])),),
        description=(words[12], words[13], words[14]),
        qid="tiny",
    )
    return quad, vocab


def _primitive_cases(rng: np.random.Generator):
    r = lambda *shape: rng.normal(size=shape)  # noqa: E731
    w2 = r(3, 4)
    w3 = r(2, 3, 4)
    w_cat, w_sm, w_emb = r(3, 4), r(2, 4), r(4, 3)
    ids = np.array([1, 3, 3, 0])
    mask = np.array([[1, 1, 0, 1], [0, 1, 1, 1]])

    def dot(t, weights):
        return T.tsum(T.mul(t, Tensor(weights)))

    H = 3
    gru_mask = np.array([[1, 1, 1, 0], [1, 1, 0, 0]])
    gru_in = [r(2, 4, 2), r(2, H) * 0.5, r(2, 3 * H) * 0.5, r(H, 3 * H) * 0.5, r(3 * H) * 0.1]
    gru_w = r(2, 4, H)
    return {
        "matmul": (lambda a, b: dot(T.matmul(a, b), w2), [r(3, 5), r(5, 4)]),
        "matmul_vec": (lambda a, b: T.tsum(T.mul(T.matmul(a, b), Tensor(w2[0]))), [r(5), r(5, 4)]),
        "add": (lambda a, b: dot(T.add(a, b), w2), [r(3, 4), r(4)]),
        "sub": (lambda a, b: dot(T.sub(a, b), w2), [r(3, 4), r(3, 1)]),
        "mul": (lambda a, b: dot(T.mul(a, b), w2), [r(3, 4), r(3, 4)]),
        "scalar_scale": (lambda a: dot(T.scale(a, -1.7), w2), [r(3, 4)]),
        "concat": (lambda a, b: dot(T.concat([a, b], axis=1), w_cat), [r(3, 1), r(3, 3)]),
        "stack": (lambda a, b: dot(T.stack([a, b]), w3), [r(3, 4), r(3, 4)]),
        "index": (lambda a: dot(T.index(a, (np.array([0, 2, 2]), slice(None))), w2), [r(3, 4)]),
        "reshape": (lambda a: dot(T.reshape(a, (3, 4)), w2), [r(12)]),
        "transpose": (lambda a: dot(T.transpose(a), w2), [r(4, 3)]),
        "tanh": (lambda a: dot(T.tanh(a), w2), [r(3, 4)]),
        "sigmoid": (lambda a: dot(T.sigmoid(a), w2), [r(3, 4)]),
        "log": (lambda a: dot(T.log(a, floor=1e-12), w2), [rng.uniform(0.5, 2.0, size=(3, 4))]),
        "sum": (lambda a: T.tsum(T.mul(T.tsum(a, axis=0), Tensor(w2[0]))), [r(3, 4)]),
        "masked_softmax": (lambda a: dot(T.masked_softmax(a, mask), w_sm), [r(2, 4)]),
        "embedding_lookup": (lambda a: dot(T.embedding_lookup(a, ids), w_emb), [r(5, 3)]),
        "max_over_axis": (lambda a: dot(T.max_over_axis(a, axis=1), w2[:, 0]), [r(3, 4)]),
        "gru": (lambda *a: dot(T.gru(*a, mask=gru_mask), gru_w), gru_in),
        "gru_reverse": (lambda *a: dot(T.gru(*a, mask=gru_mask, reverse=True), gru_w), gru_in),
    }


def check_primitives(seed: int = 7, points: int = 1) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for _ in range(points):
        for name, (fn, inputs) in _primitive_cases(rng).items():
            worst[name] = max(worst.get(name, 0.0), grad_check(fn, inputs))
    return worst


def model_loss_check(seed: int = 7, hidden: int = 4, embedding_dim: int = 4, lam: float = 0.5,
                     init_range: float = 0.5, max_coords: int | None = None) -> float:
    """Gradient of the full teacher-forced loss of the tiny instance against
    central differences, in float64.  ``max_coords`` limits the check to a
    random subset of that many coordinates per parameter tensor."""
    from .training import instance_loss

    quad, vocab = tiny_instance()
    enc = encode_quadruple(quad, vocab)
    params = init_params(len(vocab), embedding_dim, hidden, init_range, seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    for name, p in params.items():
        if name.endswith("_b") or name in ("out_bg", "out_bo"):
            p.data[...] = rng.uniform(-init_range, init_range, size=p.shape)
    names = list(params)

    def fn(*tensors):
        return instance_loss(enc, dict(zip(names, tensors)), lam)

    coords = None
    if max_coords is not None:
        coords = {k: rng.choice(p.data.size, size=min(max_coords, p.data.size), replace=False)
                  for k, p in enumerate(params.values())}
    return grad_check(fn, [p.data for p in params.values()], coords=coords)


def run_all(seed: int = 7, points: int = 1) -> tuple[dict[str, float], float]:
    """Returns per-check max relative errors and wall time in seconds."""
    t0 = time.perf_counter()
    results = check_primitives(seed, points)
    results["model_loss"] = model_loss_check(seed)
    results["model_loss_lambda1"] = model_loss_check(seed, lam=1.0, max_coords=25)
    return results, time.perf_counter() - t0
