import math
import struct

import numpy as np
import pytest

from ctrsgen.config import DEFAULT_HYPERPARAMETERS, TrainConfig, read_config_file, write_config_file
from ctrsgen.corpus import build_vocabulary, encode_quadruple
from ctrsgen.synthetic import make_corpus
from ctrsgen.tensor import Tensor
from ctrsgen.training import (
    FORMAT_VERSION,
    MAGIC,
    CheckpointError,
    TrainingError,
    checkpoint_bytes,
    checkpoint_from_bytes,
    corpus_token_nll,
    load_checkpoint,
    nll_loss,
    save_checkpoint,
    train,
)


def test_nll_uniform_is_log_v():
    V = 7
    loss = nll_loss(Tensor(np.full((3, V), 1 / V)), [1, 2, 3])
    assert float(loss.data) == pytest.approx(math.log(V))


def test_nll_certain_is_zero():
    d = np.zeros((2, 4))
    d[0, 1] = d[1, 3] = 1.0
    assert float(nll_loss(Tensor(d, dtype=np.float64), [1, 3]).data) == 0.0


def test_nll_two_step_example():
    d = np.array([[0.5, 0.5, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]])
    loss = nll_loss(Tensor(d, dtype=np.float64), [0, 2])
    assert float(loss.data) == pytest.approx((math.log(2) + math.log(4)) / 2)


def test_nll_floor_keeps_zero_probability_finite():
    loss = nll_loss(Tensor(np.array([[1.0, 0.0]]), dtype=np.float64), [1])
    assert float(loss.data) == pytest.approx(-math.log(1e-12))


def test_nll_shape_mismatch():
    with pytest.raises(ValueError):
        nll_loss(Tensor(np.full((2, 3), 1 / 3)), [0])


def test_default_config_hyperparameters():
    cfg = TrainConfig()
    for key, value in DEFAULT_HYPERPARAMETERS.items():
        assert getattr(cfg, key) == value
    assert (cfg.beta1, cfg.beta2, cfg.eps_adam) == (0.9, 0.999, 1e-8)


def test_config_validation_and_file_roundtrip(tmp_path):
    with pytest.raises(ValueError):
        TrainConfig(lam=1.5)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    cfg = TrainConfig(hidden=8, tie_doc_encoders=False)
    write_config_file(cfg, tmp_path / "c.txt")
    assert TrainConfig(**read_config_file(tmp_path / "c.txt")) == cfg
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"nope": 1})


def _setup(n=6, seed=0, **cfg):
    corpus = make_corpus(n, seed=seed, words=20, empty_irrelevant_every=3)
    vocab = build_vocabulary(corpus, 100)
    base = dict(hidden=4, embedding_dim=6, epochs=2, batch_size=4, seed=1, lr=0.01, patience=0)
    base.update(cfg)
    config = TrainConfig(**base)
    data = [encode_quadruple(q, vocab, config.caps) for q in corpus]
    return data, vocab, config


def test_training_reduces_loss():
    data, vocab, cfg = _setup(epochs=6, lr=0.02)
    from ctrsgen.params import params_from_config

    before = corpus_token_nll(data, params_from_config(cfg, len(vocab)))
    res = train(data, None, cfg, vocab)
    after = corpus_token_nll(data, res.best.model_params())
    assert after < before
    assert [r["epoch"] for r in res.history] == list(range(1, 7))
    assert res.last.step == 6 * 2


def test_training_is_deterministic():
    data, vocab, cfg = _setup()
    a = checkpoint_bytes(train(data, data[:2], cfg, vocab).last)
    b = checkpoint_bytes(train(data, data[:2], cfg, vocab).last)
    assert a == b


def test_checkpoint_roundtrip_bytes(tmp_path):
    data, vocab, cfg = _setup()
    ckpt = train(data, None, cfg, vocab).last
    save_checkpoint(ckpt, tmp_path / "m.ckpt")
    raw = (tmp_path / "m.ckpt").read_bytes()
    again = load_checkpoint(tmp_path / "m.ckpt")
    assert checkpoint_bytes(again) == raw
    assert again.config == cfg and again.vocab == vocab
    for k, v in ckpt.params.items():
        np.testing.assert_array_equal(again.params[k], v)


def test_checkpoint_errors(tmp_path):
    data, vocab, cfg = _setup(epochs=1)
    raw = checkpoint_bytes(train(data, None, cfg, vocab).last)
    with pytest.raises(CheckpointError, match="truncated"):
        checkpoint_from_bytes(raw[:-10])
    with pytest.raises(CheckpointError, match="magic"):
        checkpoint_from_bytes(b"XXXX" + raw[4:])
    bumped = MAGIC + struct.pack("<I", FORMAT_VERSION + 1) + raw[8:]
    with pytest.raises(CheckpointError, match="version"):
        checkpoint_from_bytes(bumped)
    with pytest.raises(CheckpointError, match="trailing"):
        checkpoint_from_bytes(raw + b"\0\0\0\0")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_resume_matches_uninterrupted_run():
    data, vocab, cfg = _setup(epochs=4)
    full = train(data, data[:2], cfg, vocab)
    half = train(data, data[:2], cfg.replace(epochs=2), vocab)
    resumed = train(data, data[:2], cfg, vocab, resume=checkpoint_from_bytes(checkpoint_bytes(half.last)))
    assert resumed.history == full.history
    for k in full.last.params:
        np.testing.assert_array_equal(resumed.last.params[k], full.last.params[k])
    assert checkpoint_bytes(resumed.best) == checkpoint_bytes(full.best)


def test_best_checkpoint_tracks_validation():
    data, vocab, cfg = _setup(epochs=5, lr=0.05)
    res = train(data, data[:3], cfg, vocab)
    losses = [r["valid_loss"] for r in res.history]
    assert res.best.best_epoch == int(np.argmin(losses)) + 1
    assert res.best.best_valid == min(losses)


def test_early_stopping():
    data, vocab, cfg = _setup(epochs=40, lr=0.3, patience=1)
    res = train(data, data[:1], cfg, vocab)
    assert len(res.history) < 40
    losses = [r["valid_loss"] for r in res.history]
    assert losses[-1] >= min(losses)


def test_non_finite_loss_raises():
    data, vocab, cfg = _setup(epochs=1)
    from ctrsgen.params import params_from_config

    params = params_from_config(cfg, len(vocab))
    params["out_bo"].data[...] = np.nan
    with pytest.raises(TrainingError, match="step 0"):
        train(data, None, cfg, vocab, params=params)


def test_empty_training_split():
    _, vocab, cfg = _setup()
    with pytest.raises(ValueError):
        train([], None, cfg, vocab)
