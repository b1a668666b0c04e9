"""Command-line entry point: ``marn <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 data or format
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .config import RunConfig
from .errors import ConfigError, ContractError, FormatError, MarnError, NumericalError
from .errors import DigestMismatchError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4

COMMANDS = ("synth", "train-basis", "build-memory", "train-memory", "caption", "eval", "gradcheck")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _dims(text: str) -> tuple[int, ...]:
    try:
        dims = tuple(int(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"--dims expects m,H,A,emb integers, got {text!r}") from None
    if len(dims) != 4:
        raise argparse.ArgumentTypeError(f"--dims expects four integers, got {text!r}")
    return dims


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its values")
    common.add_argument("--data", help="dataset manifest (manifest.json)")
    common.add_argument("--out", help="run or output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--lambda", dest="lam", type=float, help="fusion weight; default is the tuned value")
    common.add_argument("--beta", type=float, help="attention-coherent loss weight")
    common.add_argument("--k", type=int, help="top-k attended items per word occurrence")
    common.add_argument("--dims", type=_dims, help="m,H,A,emb")
    common.add_argument("--epochs", type=int)
    common.add_argument("--beam", type=int)
    common.add_argument("--split", default="test", choices=("train", "val", "test"),
                        help="split to caption or evaluate")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="marn", description="Memory-attended video captioning pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="{" + ",".join(COMMANDS) + "}", parser_class=_Parser)
    helps = {
        "synth": "generate a synthetic dataset into --out",
        "train-basis": "train the basis decoder",
        "build-memory": "build the word memory from the trained basis decoder",
        "train-memory": "train the memory decoder and tune lambda",
        "caption": "write captions.tsv for a split",
        "eval": "caption a split and write eval_report.json",
        "gradcheck": "finite-difference check of both losses on a micro model",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    over = {}
    for key in ("data", "out", "seed", "lam", "k", "beam"):
        val = getattr(args, key)
        if val is not None:
            over[key] = val
    if args.dims is not None:
        over["dims"] = args.dims
    train = cfg.train
    if args.beta is not None:
        train = replace(train, beta=args.beta)
    if args.epochs is not None:
        train = replace(train, epochs=args.epochs)
    return replace(cfg, train=train, **over)


def _run(cfg: RunConfig, args) -> int:
    from . import pipeline

    cmd = args.command
    if cmd == "gradcheck":
        from .microcheck import micro_gradient_check

        res = micro_gradient_check(cfg.seed)
        err = max(res["combined"], res["memory"])
        print(f"combined {res['combined']:.3e}  memory {res['memory']:.3e}  "
              f"frozen-grad {res['frozen_grad_max']:.1e}")
        print(f"max relative error {err:.3e}")
        return EXIT_OK if err < GRADCHECK_TOL and res["frozen_grad_max"] == 0.0 else EXIT_NUMERIC
    if cmd == "synth":
        print(pipeline.synth(cfg))
    elif cmd == "train-basis":
        result, digest = pipeline.train_basis_stage(cfg)
        print(f"basis {digest} selected epoch {result.report.selected_epoch} "
              f"val CIDEr {result.report.selected_metric:.4f}")
    elif cmd == "build-memory":
        memory = pipeline.build_memory_stage(cfg)
        print(f"memory K={memory.K} U={memory.U} k={memory.k}")
    elif cmd == "train-memory":
        result, lam = pipeline.train_memory_stage(cfg)
        print(f"memory decoder selected epoch {result.report.selected_epoch}; lambda {lam:.1f}")
    elif cmd == "caption":
        for vid, words in pipeline.caption_stage(cfg, args.split).items():
            print(f"{vid}\t{' '.join(words)}")
    elif cmd == "eval":
        report = pipeline.eval_stage(cfg, args.split)
        for name, val in report.scores.items():
            print(f"{name}\t{val:.4f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_usage(sys.stderr)
            raise _UsageError("a subcommand is required")
        cfg = resolve_config(args)
    except _UsageError as exc:
        print(f"marn: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"marn: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(cfg, args)
    except NumericalError as exc:
        print(f"marn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"marn: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DigestMismatchError, ContractError, OSError) as exc:
        print(f"marn: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except MarnError as exc:
        print(f"marn: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
