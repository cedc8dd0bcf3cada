"""Command-line entry point: ``ptext {collect,train,eval,transfer,zero-shot,sweep}``.

Exit status is 0 on success, 1 for invalid input or usage, 2 for runtime
failures. Every command writes its primary output atomically and a
``<out>.manifest.json`` next to it.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .checkpoint import decode_checkpoint, encode_checkpoint, write_atomic
from .corpus import LabeledCorpus, collect_captions, load_synonym_json, split_corpus
from .encoder import init_encoder
from .errors import PTextError, ValidationError, NonFiniteLoss
from .evalkit import ZERO_SHOT_TEMPLATE, evaluate, prompt_length_sweep, transfer_eval
from .trainer import TrainConfig, train

logger = logging.getLogger("ptext")

MODES = ("coarse", "fine", "ensemble", "zero_shot")


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse would exit with status 2
        raise UsageError(message)


def _digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_text(path: str | Path, text: str) -> None:
    write_atomic(path, text.encode("utf-8"))


def _write_manifest(out: str | Path, command: str, inputs: Sequence[str | Path], **extra: Any) -> None:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "inputs": {str(p): _digest(p) for p in inputs},
        "output": str(out),
        "output_sha256": _digest(out),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        **extra,
    }
    _write_text(f"{out}.manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _require(path: str | None, flag: str) -> Path:
    if path is None:
        raise UsageError(f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{flag}: no such file: {path}")
    return p


def _config(args: argparse.Namespace) -> TrainConfig:
    cfg = TrainConfig.load(_require(args.config, "--config")) if args.config else TrainConfig()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def _load_bank(path: Path):
    bank, buckets = decode_checkpoint(path.read_bytes())
    return bank, init_encoder(bank.seed, bank.dim, buckets)


def cmd_collect(args: argparse.Namespace) -> int:
    raw_path = _require(args.raw, "--raw")
    syn_path = _require(args.synonyms, "--synonyms")
    cfg = _config(args)
    L = args.captions_per_class or cfg.captions_per_class
    task = {"single": "single_label", "multi": "multi_label"}[args.task] if args.task else cfg.task_kind
    syn = load_synonym_json(syn_path)
    corpus = collect_captions(raw_path.read_text(encoding="utf-8").splitlines(), syn, task, L)
    inputs = [raw_path, syn_path] + ([args.config] if args.config else [])
    if args.held_out:
        train_part, held = split_corpus(corpus, args.held_out_fraction, cfg.seed)
        _write_text(args.out, train_part.to_jsonl())
        _write_text(args.held_out, held.to_jsonl())
        _write_manifest(args.held_out, "collect", inputs, seed=cfg.seed, captions_per_class=L)
        print(f"collected {len(corpus)} captions: {len(train_part)} train -> {args.out}, {len(held)} held out -> {args.held_out}")
    else:
        _write_text(args.out, corpus.to_jsonl())
        print(f"collected {len(corpus)} captions -> {args.out}")
    _write_manifest(args.out, "collect", inputs, seed=cfg.seed, captions_per_class=L, task=task)
    for name, c in corpus.class_counts().items():
        print(f"  {name}: {c['collected']} collected, {c['template']} template")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    corpus_path = _require(args.corpus, "--corpus")
    cfg = _config(args)
    corpus = LabeledCorpus.load(corpus_path)
    if corpus.task_kind != cfg.task_kind:
        raise ValidationError(f"corpus is {corpus.task_kind} but config says {cfg.task_kind}")
    report = train(cfg, corpus)
    write_atomic(args.out, encode_checkpoint(report.bank, cfg.bucket_count))
    report_path = args.report or f"{args.out}.report.json"
    _write_text(report_path, json.dumps(report.to_dict(include_time=False), indent=2) + "\n")
    inputs = [corpus_path] + ([args.config] if args.config else [])
    _write_manifest(args.out, "train", inputs, config=cfg.to_dict(), seed=cfg.seed, wall_time_s=report.wall_time)
    first, last = report.history[0].total if report.history else None, report.history[-1].total if report.history else None
    print(f"trained {report.steps} steps in {report.wall_time:.1f}s; loss {first} -> {last}; bank -> {args.out}")
    return 0


def _finish_eval(args: argparse.Namespace, result, inputs: list, command: str, **extra: Any) -> int:
    _write_text(args.out, result.to_json())
    _write_manifest(args.out, command, inputs, **extra)
    print(f"{result.metric} = {result.value:.4f} over {result.M} samples -> {args.out}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    bank_path = _require(args.bank, "--bank")
    corpus_path = _require(args.corpus, "--corpus")
    bank, encoder = _load_bank(bank_path)
    corpus = LabeledCorpus.load(corpus_path)
    cfg = _config(args) if args.config else None
    tau_s = cfg.tau_s if cfg else TrainConfig.tau_s
    result = evaluate(bank, encoder, corpus, corpus.task_kind, args.mode, tau_s)
    return _finish_eval(args, result, [bank_path, corpus_path], "eval", mode=args.mode)


def cmd_transfer(args: argparse.Namespace) -> int:
    bank_path = _require(args.bank, "--bank")
    corpus_path = _require(args.corpus, "--corpus")
    bank, encoder = _load_bank(bank_path)
    target = LabeledCorpus.load(corpus_path)
    cfg = _config(args) if args.config else None
    tau_s = cfg.tau_s if cfg else TrainConfig.tau_s
    result = transfer_eval(bank, encoder, target, target.task_kind, args.mode, tau_s)
    return _finish_eval(args, result, [bank_path, corpus_path], "transfer", mode=args.mode)


def cmd_zero_shot(args: argparse.Namespace) -> int:
    corpus_path = _require(args.corpus, "--corpus")
    cfg = _config(args)
    corpus = LabeledCorpus.load(corpus_path)
    encoder = init_encoder(cfg.seed, cfg.dim, cfg.bucket_count)
    result = evaluate(None, encoder, corpus, corpus.task_kind, "zero_shot", cfg.tau_s, args.template)
    inputs = [corpus_path] + ([args.config] if args.config else [])
    return _finish_eval(args, result, inputs, "zero-shot", template=args.template, seed=cfg.seed)


def _parse_lengths(text: str | None) -> list[int]:
    if not text:
        raise UsageError("--lengths is required")
    try:
        lengths = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"--lengths: {exc}") from exc
    if not lengths or any(n < 1 for n in lengths):
        raise UsageError("--lengths needs positive integers, e.g. 1,4,16")
    return lengths


def cmd_sweep(args: argparse.Namespace) -> int:
    lengths = _parse_lengths(args.lengths)
    corpus_path = _require(args.corpus, "--corpus")
    cfg = _config(args)
    corpus = LabeledCorpus.load(corpus_path)
    inputs = [corpus_path] + ([args.config] if args.config else [])
    eval_set = corpus
    if args.eval_corpus:
        eval_path = _require(args.eval_corpus, "--eval-corpus")
        eval_set = LabeledCorpus.load(eval_path)
        inputs.append(eval_path)
    rows = prompt_length_sweep(cfg, corpus, lengths, eval_set, args.mode)
    zs = evaluate(None, cfg.encoder(), eval_set, cfg.task_kind, "zero_shot", cfg.tau_s)
    table = {"mode": args.mode, "zero_shot": zs.to_dict(), "rows": [r.to_dict() for r in rows]}
    _write_text(args.out, json.dumps(table, indent=2) + "\n")
    _write_manifest(args.out, "sweep", inputs, config=cfg.to_dict(), lengths=lengths)
    print(f"zero-shot {zs.metric} = {zs.value:.4f}")
    for r in rows:
        print(f"N={r.n_prompt:3d}  {r.result.metric} = {r.result.value:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ptext", description="Audio-free multi-grained prompt tuning on captions.")
    parser.add_argument("--version", action="version", version=f"ptext {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("collect", help="label raw captions with a synonym dict")
    p.add_argument("--raw", required=True)
    p.add_argument("--synonyms", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--task", choices=("single", "multi"))
    p.add_argument("--captions-per-class", type=int)
    p.add_argument("--held-out")
    p.add_argument("--held-out-fraction", type=float, default=1 / 3)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_collect)

    p = sub.add_parser("train", help="learn coarse and fine prompts")
    p.add_argument("--corpus", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_train)

    for name, func, help_ in (
        ("eval", cmd_eval, "evaluate a bank on a labeled corpus"),
        ("transfer", cmd_transfer, "apply a bank to a different class set"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--bank", required=True)
        p.add_argument("--corpus", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--mode", choices=MODES, default="ensemble")
        p.add_argument("--config")
        p.set_defaults(func=func)

    p = sub.add_parser("zero-shot", help="hand-written template baseline")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--template", default=ZERO_SHOT_TEMPLATE)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_zero_shot)

    p = sub.add_parser("sweep", help="train and evaluate several prompt lengths")
    p.add_argument("--config")
    p.add_argument("--corpus", required=True)
    p.add_argument("--eval-corpus")
    p.add_argument("--lengths", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=MODES, default="ensemble")
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sweep)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"ptext: usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NonFiniteLoss as exc:
        print(f"ptext: {exc}", file=sys.stderr)
        return 2
    except (PTextError, FileNotFoundError) as exc:
        print(f"ptext: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        logger.exception("unexpected failure")
        print(f"ptext: runtime error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
