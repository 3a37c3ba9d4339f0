"""Command line entry point: prep, train, generate, eval, grad-check, inspect-attention."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .config import TrainConfig, read_config_file, write_config_file

log = logging.getLogger("ctrsgen")


class CliError(Exception):
    pass


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training configuration (flags > --config file > defaults)")
    g.add_argument("--config", type=Path, help="key=value file of configuration overrides")
    for f in dataclasses.fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            g.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None)
        else:
            g.add_argument(flag, dest=f.name, type=type(f.default), default=None, metavar=f.name.upper())


def effective_config(args: argparse.Namespace) -> TrainConfig:
    values = {}
    if getattr(args, "config", None) is not None:
        if not args.config.is_file():
            raise CliError(f"config file not found: {args.config}")
        values.update(read_config_file(args.config))
    for f in dataclasses.fields(TrainConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    try:
        return TrainConfig(**values)
    except (TypeError, ValueError) as exc:
        raise CliError(str(exc)) from None


def _require(path: Path | None, what: str) -> Path:
    if path is None:
        raise CliError(f"missing {what}")
    if not Path(path).exists():
        raise CliError(f"{what} not found: {path}")
    return Path(path)


def _default_split_sizes(n: int) -> tuple[int, int, int]:
    """Scale the 5000/100/258 split to a corpus of ``n`` queries."""
    valid = round(n * 100 / 5358)
    test = round(n * 258 / 5358)
    return n - valid - test, valid, test


def cmd_prep(args) -> int:
    from .corpus import build_vocabulary, corpus_stats, encode_quadruple, load_corpus, split_corpus, write_corpus

    cfg = effective_config(args)
    corpus = load_corpus(_require(args.input, "input corpus"))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.split:
        try:
            sizes = tuple(int(s) for s in args.split.split(","))
        except ValueError:
            raise CliError(f"--split expects three integers, got {args.split!r}") from None
        if len(sizes) != 3:
            raise CliError("--split expects train,valid,test")
    else:
        sizes = _default_split_sizes(len(corpus))
    train, valid, test = split_corpus(corpus, cfg.seed, sizes)
    vocab = build_vocabulary(corpus, cfg.vocab_max, cfg.vocab_include_descriptions)
    vocab.save(out / "vocab.json")
    for name, split in (("train", train), ("valid", valid), ("test", test)):
        write_corpus(split, out / f"{name}.jsonl")
        with open(out / f"{name}.ids.jsonl", "w", encoding="utf-8") as fh:
            for q in split:
                e = encode_quadruple(q, vocab, cfg.caps)
                fh.write(json.dumps({
                    "id": e.qid,
                    "query": e.query_ids.tolist(),
                    "relevant": [row[: int(m.sum())].tolist() for row, m in zip(e.mega_doc, e.word_mask)],
                    "irrelevant": [[row[: int(m.sum())].tolist() for row, m in zip(ids, wm)] for ids, wm in e.irrelevant],
                    "target": e.target_ids.tolist(),
                }) + "\n")
    stats = {"corpus": corpus_stats(corpus), "splits": {"train": len(train), "valid": len(valid), "test": len(test)},
             "vocab_size": len(vocab)}
    (out / "stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    write_config_file(cfg, out / "config.txt")
    c = stats["corpus"]
    print(f"queries: {c['queries']}")
    if c["queries"]:
        print(f"query avg #w: {c['query_avg_words']:.1f}")
        print(f"query avg #r: {c['query_avg_relevant_docs']:.1f}")
        print(f"query avg #i: {c['query_avg_irrelevant_docs']:.1f}")
        print(f"relevant doc avg #s: {c['relevant_doc_avg_sentences']:.1f}")
        print(f"irrelevant doc avg #s: {c['irrelevant_doc_avg_sentences']:.1f}")
        print(f"description avg #w: {c['description_avg_words']:.1f}")
        print(f"queries without irrelevant docs: {c['queries_without_irrelevant']}")
    print(f"split: {len(train)}/{len(valid)}/{len(test)}, vocab {len(vocab)}")
    return 0


def cmd_train(args) -> int:
    from .corpus import Vocabulary, build_vocabulary, encode_quadruple, load_corpus
    from .params import load_embeddings, params_from_config
    from .training import load_checkpoint, save_checkpoint, train

    cfg = effective_config(args)
    train_quads = load_corpus(_require(args.train, "training corpus"))
    valid_quads = load_corpus(_require(args.valid, "validation corpus")) if args.valid else []
    resume = load_checkpoint(_require(args.resume, "resume checkpoint")) if args.resume else None
    if resume is not None:
        vocab = resume.vocab
    elif args.vocab:
        vocab = Vocabulary.load(_require(args.vocab, "vocabulary"))
    else:
        vocab = build_vocabulary(train_quads, cfg.vocab_max, cfg.vocab_include_descriptions)
    caps = cfg.caps
    train_set = [encode_quadruple(q, vocab, caps) for q in train_quads]
    valid_set = [encode_quadruple(q, vocab, caps) for q in valid_quads]
    params = None
    if resume is None:
        params = params_from_config(cfg, len(vocab))
        if args.embeddings:
            hits = load_embeddings(_require(args.embeddings, "embedding file"), vocab, params)
            log.info("loaded %d pretrained embedding rows", hits)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config_file(cfg, out / "config.txt")

    def report(rec):
        msg = f"epoch {rec['epoch']} train_loss {rec['train_loss']:.4f}"
        if "valid_loss" in rec:
            msg += f" valid_loss {rec['valid_loss']:.4f}"
        print(msg, flush=True)

    result = train(train_set, valid_set or None, cfg, vocab, params=params, resume=resume, on_epoch=report)
    save_checkpoint(result.best, out / "model.ckpt")
    save_checkpoint(result.last, out / "last.ckpt")
    with open(out / "loss_log.tsv", "w", encoding="utf-8") as fh:
        fh.write("epoch\tstep\ttrain_loss\tvalid_loss\n")
        for rec in result.history:
            valid = repr(rec["valid_loss"]) if "valid_loss" in rec else ""
            fh.write(f"{rec['epoch']}\t{rec['step']}\t{rec['train_loss']!r}\t{valid}\n")
    return 0


def _load_model(args):
    from .training import load_checkpoint

    return load_checkpoint(_require(args.checkpoint, "checkpoint (--checkpoint)"))


def cmd_generate(args) -> int:
    from .corpus import load_corpus
    from .evaluation import generate_descriptions

    ckpt = _load_model(args)
    quads = load_corpus(_require(args.input, "input corpus"))
    cfg = ckpt.config
    outs = generate_descriptions(quads, ckpt.model_params(), ckpt.vocab, cfg.caps, cfg.lam,
                                 args.beam_width or cfg.beam_width, args.max_len)
    lines = [json.dumps({"id": q.qid, "description": " ".join(o)}) for q, o in zip(quads, outs)]
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    from .corpus import load_corpus
    from .evaluation import SLICE_KEYS, evaluate_corpus

    ckpt = _load_model(args)
    quads = load_corpus(_require(args.input, "input corpus"))
    keys = args.slices.split(",") if args.slices else list(SLICE_KEYS)
    bad = [k for k in keys if k not in SLICE_KEYS]
    if bad:
        raise CliError(f"unknown slice keys {bad}; choose from {list(SLICE_KEYS)}")
    report = evaluate_corpus(ckpt, quads, keys, beam_width=args.beam_width)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report.write_json(out / "report.json")
    report.write_tsv(out / "report.tsv")
    write_config_file(ckpt.config, out / "config.txt")
    o = report.overall
    print(f"n={o['count']} R1={o['rouge1_recall']:.4f} R2={o['rouge2_recall']:.4f} RL={o['rougeL_recall']:.4f}")
    return 0


def cmd_grad_check(args) -> int:
    from .tensor import BACKEND
    from .verify import TOLERANCE, run_all

    results, seconds = run_all(args.seed, args.points)
    failed = False
    for name, err in results.items():
        ok = err < TOLERANCE
        failed |= not ok
        print(f"{name:20s} {err:.3e} {'ok' if ok else 'FAIL'}")
    print(f"backend={BACKEND} time={seconds:.1f}s")
    return 1 if failed else 0


def cmd_inspect_attention(args) -> int:
    from .corpus import encode_quadruple, load_corpus
    from .decoder import generate, write_attention_tsv
    from .encoders import encode
    from .tensor import no_grad

    ckpt = _load_model(args)
    quads = load_corpus(_require(args.input, "input corpus"))
    params = ckpt.model_params()
    cfg = ckpt.config
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, q in enumerate(quads):
        with no_grad():
            enc = encode(encode_quadruple(q, ckpt.vocab, cfg.caps), params)
        states: list = []
        generate(enc, params, args.max_len or cfg.description_cap, args.beam_width or cfg.beam_width, cfg.lam, record=states)
        safe = "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in q.qid) or str(i)
        write_attention_tsv(states, out / f"attention_{i:05d}_{safe}.tsv")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ctrsgen", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", help="split a quadruple corpus, build the vocabulary, report statistics")
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out-dir", type=Path, required=True)
    p.add_argument("--split", help="train,valid,test sizes (default: 5000/100/258 scaled to the corpus)")
    _add_config_flags(p)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", type=Path, required=True)
    p.add_argument("--valid", type=Path)
    p.add_argument("--vocab", type=Path)
    p.add_argument("--embeddings", type=Path, help="text file of 'token v1 ... vE' lines")
    p.add_argument("--resume", type=Path, help="continue from a last.ckpt")
    p.add_argument("--out-dir", type=Path, required=True)
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("generate", cmd_generate, "generate one description per input quadruple"),
        ("eval", cmd_eval, "ROUGE recall report"),
        ("inspect-attention", cmd_inspect_attention, "dump sentence attention per decoding step"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--checkpoint", type=Path)
        p.add_argument("--input", type=Path, required=True)
        p.add_argument("--beam-width", type=int)
        if name == "generate":
            p.add_argument("--output", type=Path)
        else:
            p.add_argument("--out-dir", type=Path, required=True)
        if name == "eval":
            p.add_argument("--slices", help="comma-separated subset of query_type,irrelevant,sentences")
        else:
            p.add_argument("--max-len", type=int)
        p.set_defaults(func=func)

    p = sub.add_parser("grad-check", help="finite-difference check of every primitive and the model loss")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--points", type=int, default=1, help="random points per primitive")
    p.set_defaults(func=cmd_grad_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
