"""Compare the compiled and numpy GRU kernels.

    python benchmarks/bench_gru.py [--repeat 5]

Times forward+backward over shapes typical of the encoders (many short
word sequences), the sentence encoder (one long sequence) and a decoder
step, plus one full training epoch on a toy corpus with each backend.
"""

import argparse
import time

import numpy as np

from ctrsgen.tensor import _gru_py

try:
    from ctrsgen.tensor import _gru_ext
except ImportError:  # extension not built
    _gru_ext = None

SHAPES = {
    "word level (T=12, B=24, H=32)": (12, 24, 32),
    "sentence level (T=60, B=1, H=32)": (60, 1, 32),
    "decoder step (T=1, B=1, H=64)": (1, 1, 64),
    "full width (T=20, B=8, H=256)": (20, 8, 256),
}


def bench(mod, T, B, H, repeat, dtype=np.float32):
    rng = np.random.default_rng(0)
    xw = rng.normal(size=(T, B, 3 * H)).astype(dtype)
    h0 = np.zeros((B, H), dtype)
    U = (rng.normal(size=(H, 3 * H)) * 0.1).astype(dtype)
    mask = np.ones((T, B), dtype)
    ds = rng.normal(size=(T, B, H)).astype(dtype)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        cache = mod.gru_forward(xw, h0, U, mask)
        mod.gru_backward(ds, h0, U, mask, *cache)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_epoch(backend_mod):
    from ctrsgen.config import TrainConfig
    from ctrsgen.corpus import build_vocabulary, encode_quadruple
    from ctrsgen.synthetic import make_corpus
    from ctrsgen.tensor import kernels
    from ctrsgen.training import train

    kernels.gru_forward, kernels.gru_backward = backend_mod.gru_forward, backend_mod.gru_backward
    quads = make_corpus(16, seed=0)
    vocab = build_vocabulary(quads, 1000)
    cfg = TrainConfig(hidden=32, embedding_dim=32, epochs=1)
    data = [encode_quadruple(q, vocab, cfg.caps) for q in quads]
    t0 = time.perf_counter()
    train(data, None, cfg, vocab)
    return time.perf_counter() - t0


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'case':40s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, (T, B, H) in SHAPES.items():
        tp = bench(_gru_py, T, B, H, args.repeat)
        if _gru_ext is None:
            print(f"{name:40s} {tp * 1e3:10.3f} {'n/a':>10s}")
            continue
        tc = bench(_gru_ext, T, B, H, args.repeat)
        print(f"{name:40s} {tp * 1e3:10.3f} {tc * 1e3:10.3f} {tp / tc:8.2f}")
    ep = bench_epoch(_gru_py)
    line = f"{'train epoch, 16 toy instances, H=32':40s} {ep * 1e3:10.1f}"
    if _gru_ext is not None:
        ec = bench_epoch(_gru_ext)
        line += f" {ec * 1e3:10.1f} {ep / ec:8.2f}"
    print(line)


if __name__ == "__main__":
    main()
