"""Maximum-likelihood training with Adam, clipping and checkpoints."""

from __future__ import annotations

import json
import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import TrainConfig
from .corpus import EncodedQuadruple, Vocabulary
from .decoder import teacher_forced_distributions
from .encoders import encode
from .params import ModelParams, copy_params, params_from_config, zero_grads
from .tensor import (
    AdamState,
    Tensor,
    adam_step,
    backward,
    clip_global_norm,
    index,
    log,
    mul,
    no_grad,
    scale,
    tsum,
)

logger = logging.getLogger(__name__)

MAGIC = b"CGEN"
FORMAT_VERSION = 1
PROB_FLOOR = 1e-12


class TrainingError(RuntimeError):
    pass


class CheckpointError(ValueError):
    pass


def nll_loss(distributions: Tensor, target_ids, mask=None) -> Tensor:
    """Mean of -log p(target) over unmasked positions.

    ``distributions`` is ``[Z, V]``; probabilities are floored at 1e-12
    inside the log.
    """
    target_ids = np.asarray(target_ids, dtype=np.int64)
    Z = target_ids.shape[0]
    if distributions.shape[0] != Z:
        raise ValueError(f"nll_loss: {distributions.shape[0]} distributions for {Z} targets")
    picked = index(distributions, (np.arange(Z), target_ids))
    logs = log(picked, floor=PROB_FLOOR)
    if mask is None:
        return scale(tsum(logs), -1.0 / Z)
    m = np.asarray(mask, dtype=distributions.dtype)
    count = float(m.sum())
    if count == 0:
        raise ValueError("nll_loss: every position is masked")
    return scale(tsum(mul(logs, Tensor(m, dtype=distributions.dtype))), -1.0 / count)


def instance_loss(enc: EncodedQuadruple, params: ModelParams, lam: float = 0.5) -> Tensor:
    """Teacher-forced per-token NLL of one instance."""
    outputs = encode(enc, params)
    dists = teacher_forced_distributions(outputs, enc.target_ids, params, lam)
    return nll_loss(dists, enc.target_ids[1:])


def corpus_token_nll(data: Sequence[EncodedQuadruple], params: ModelParams, lam: float = 0.5) -> float:
    """Total NLL divided by total predicted tokens."""
    total, tokens = 0.0, 0
    with no_grad():
        for enc in data:
            n = len(enc.target_ids) - 1
            total += float(instance_loss(enc, params, lam).data) * n
            tokens += n
    return total / max(tokens, 1)


def mean_loss(data: Sequence[EncodedQuadruple], params: ModelParams, lam: float = 0.5) -> float:
    with no_grad():
        return float(np.mean([float(instance_loss(e, params, lam).data) for e in data]))


# ---------------------------------------------------------------------------
# checkpoints

@dataclass
class Checkpoint:
    config: TrainConfig
    vocab: Vocabulary
    params: dict[str, np.ndarray]
    adam: AdamState = field(default_factory=AdamState)
    epoch: int = 0
    step: int = 0
    rng_state: dict | None = None
    history: list[dict] = field(default_factory=list)
    best_valid: float | None = None
    best_epoch: int | None = None
    bad_epochs: int = 0
    best_params: dict[str, np.ndarray] | None = None

    def model_params(self, requires_grad: bool = False, dtype=np.float32) -> ModelParams:
        return {k: Tensor(v.astype(dtype), requires_grad=requires_grad, dtype=dtype, name=k)
                for k, v in self.params.items()}


def _blobs(ckpt: Checkpoint):
    for name, arr in ckpt.params.items():
        yield "param", name, arr
    for name in ckpt.params:
        if name in ckpt.adam.m:
            yield "adam_m", name, ckpt.adam.m[name]
            yield "adam_v", name, ckpt.adam.v[name]
    if ckpt.best_params is not None:
        for name, arr in ckpt.best_params.items():
            yield "best", name, arr


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    manifest, payload = [], []
    for kind, name, arr in _blobs(ckpt):
        manifest.append({"kind": kind, "name": name, "shape": list(arr.shape)})
        payload.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    meta = {
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab.to_json(),
        "adam_step": ckpt.adam.step,
        "epoch": ckpt.epoch,
        "step": ckpt.step,
        "rng_state": ckpt.rng_state,
        "history": ckpt.history,
        "best_valid": ckpt.best_valid,
        "best_epoch": ckpt.best_epoch,
        "bad_epochs": ckpt.bad_epochs,
        "manifest": manifest,
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(meta_bytes))
    return header + meta_bytes + b"".join(payload)


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(ckpt))
    tmp.replace(path)


def checkpoint_from_bytes(raw: bytes) -> Checkpoint:
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, meta_len = struct.unpack("<IQ", raw[4:16])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    end = 16 + meta_len
    if end > len(raw):
        raise CheckpointError("checkpoint truncated inside metadata")
    try:
        meta = json.loads(raw[16:end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from None
    arrays: dict[str, dict[str, np.ndarray]] = {"param": {}, "adam_m": {}, "adam_v": {}, "best": {}}
    offset = end
    for entry in meta["manifest"]:
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(raw):
            raise CheckpointError(f"checkpoint truncated in tensor {entry['name']}")
        arr = np.frombuffer(raw, dtype="<f4", count=nbytes // 4, offset=offset).reshape(shape)
        arrays[entry["kind"]][entry["name"]] = arr.astype(np.float32)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} trailing bytes after last tensor")
    adam = AdamState(meta["adam_step"], arrays["adam_m"], arrays["adam_v"])
    return Checkpoint(
        config=TrainConfig.from_dict(meta["config"]),
        vocab=Vocabulary.from_json(meta["vocab"]),
        params=arrays["param"],
        adam=adam,
        epoch=meta["epoch"],
        step=meta["step"],
        rng_state=meta["rng_state"],
        history=meta["history"],
        best_valid=meta["best_valid"],
        best_epoch=meta["best_epoch"],
        bad_epochs=meta["bad_epochs"],
        best_params=arrays["best"] or None,
    )


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return checkpoint_from_bytes(raw)


# ---------------------------------------------------------------------------
# training loop

@dataclass
class TrainResult:
    best: Checkpoint
    last: Checkpoint
    history: list[dict]


def _snapshot(params: ModelParams) -> dict[str, np.ndarray]:
    return {k: v.data.copy() for k, v in params.items()}


def _adam_copy(state: AdamState) -> AdamState:
    return AdamState(state.step, {k: v.copy() for k, v in state.m.items()}, {k: v.copy() for k, v in state.v.items()})


def train(
    train_set: Sequence[EncodedQuadruple],
    valid_set: Sequence[EncodedQuadruple] | None,
    config: TrainConfig,
    vocab: Vocabulary,
    params: ModelParams | None = None,
    resume: Checkpoint | None = None,
    on_epoch: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Teacher-forced MLE.

    Each Adam step averages gradients over ``batch_size`` instances, then
    clips the global norm.  With a validation set, the best-validation
    parameters are kept and training stops after ``patience`` epochs
    without improvement (``patience=0`` disables stopping).
    """
    if not train_set:
        raise ValueError("empty training split")
    if resume is not None:
        params = resume.model_params(requires_grad=True)
        adam = _adam_copy(resume.adam)
        rng = np.random.default_rng()
        rng.bit_generator.state = resume.rng_state
        history = list(resume.history)
        start_epoch, step = resume.epoch, resume.step
        best_valid, best_epoch, bad = resume.best_valid, resume.best_epoch, resume.bad_epochs
        best_params = {k: v.copy() for k, v in (resume.best_params or resume.params).items()}
    else:
        if params is None:
            params = params_from_config(config, len(vocab))
        adam = AdamState()
        rng = np.random.default_rng([config.seed, 1])
        history, start_epoch, step = [], 0, 0
        best_valid, best_epoch, bad = None, None, 0
        best_params = _snapshot(params)

    n = len(train_set)
    bs = config.batch_size
    for epoch in range(start_epoch, config.epochs):
        if valid_set and config.patience and bad >= config.patience:
            break
        order = rng.permutation(n)
        losses = []
        for start in range(0, n, bs):
            batch = order[start : start + bs]
            zero_grads(params)
            for i in batch:
                enc = train_set[int(i)]
                loss = instance_loss(enc, params, config.lam)
                value = float(loss.data)
                if not math.isfinite(value):
                    raise TrainingError(f"non-finite loss {value} at step {step}, epoch {epoch}, instance {enc.qid!r}")
                backward(scale(loss, 1.0 / len(batch)))
                losses.append(value)
            clip_global_norm(params, config.clip_norm)
            adam_step(params, adam, config.lr, config.beta1, config.beta2, config.eps_adam)
            step += 1
        record = {"epoch": epoch + 1, "step": step, "train_loss": float(np.mean(losses))}
        if valid_set:
            vloss = mean_loss(valid_set, params, config.lam)
            record["valid_loss"] = vloss
            if best_valid is None or vloss < best_valid:
                best_valid, best_epoch, bad = vloss, epoch + 1, 0
                best_params = _snapshot(params)
            else:
                bad += 1
        else:
            best_epoch = epoch + 1
            best_params = _snapshot(params)
        history.append(record)
        logger.info("epoch %d: %s", epoch + 1, record)
        if on_epoch is not None:
            on_epoch(record)
        start_epoch = epoch + 1

    last = Checkpoint(
        config=config,
        vocab=vocab,
        params=_snapshot(params),
        adam=_adam_copy(adam),
        epoch=start_epoch,
        step=step,
        rng_state=rng.bit_generator.state,
        history=list(history),
        best_valid=best_valid,
        best_epoch=best_epoch,
        bad_epochs=bad,
        best_params={k: v.copy() for k, v in best_params.items()},
    )
    best = Checkpoint(
        config=config,
        vocab=vocab,
        params={k: v.copy() for k, v in best_params.items()},
        epoch=best_epoch or 0,
        step=step,
        history=list(history),
        best_valid=best_valid,
        best_epoch=best_epoch,
    )
    return TrainResult(best, last, history)
