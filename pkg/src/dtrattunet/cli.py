"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Diagnostics go to
stderr; results go to files (``params`` also prints its table to stdout).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__

log = logging.getLogger("dtrattunet")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _add_model_args(p: argparse.ArgumentParser, transformer_default: str) -> None:
    from .model import VARIANTS

    p.add_argument("--variant", default="dtrattunet", choices=sorted(VARIANTS))
    p.add_argument("--size", type=int, default=64, help="image height and width")
    p.add_argument("--base-width", type=int, default=16, help="channel width B of the first stage")
    p.add_argument("--classes", choices=("binary", "multi"), default="binary")
    p.add_argument(
        "--transformer", choices=("base", "desk"), default=transformer_default,
        help="transformer size: 'base' is ViT-Base scale, 'desk' a small CPU-friendly stack",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dtrattunet", description="Hybrid CNN-transformer lesion/organ segmentation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate-data", help="write a synthetic dataset and manifest")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=250)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--classes", choices=("binary", "multi"), default="binary")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--folds", type=int, default=5)

    t = sub.add_parser("train", help="train a model variant")
    _add_model_args(t, "desk")
    t.add_argument("--data", required=True, help="dataset directory or manifest file")
    t.add_argument("--out", required=True)
    t.add_argument("--fold", type=int, default=0, help="held-out validation fold")
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--paper-recipe", action="store_true", help="epochs 100, batch 16, lr 0.1")

    e = sub.add_parser("eval", help="evaluate a checkpoint on a held-out fold")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--fold", type=int, default=0)
    e.add_argument("--batch", type=int, default=16)
    e.add_argument("--out", help="write the metrics report here instead of stdout")

    pr = sub.add_parser("predict", help="segment one PGM image")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("image")
    pr.add_argument("--out", required=True)

    pa = sub.add_parser("params", help="print parameter counts per submodule")
    _add_model_args(pa, "base")

    gc = sub.add_parser("gradcheck", help="run the finite-difference gradient suite")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--tol", type=float, default=1e-4, help="tolerance for primitives and blocks")
    return parser


def _model_config(args):
    from .model import ModelVariantConfig
    from .transformer import TransformerConfig

    tcfg = TransformerConfig() if args.transformer == "base" else TransformerConfig.desk()
    return ModelVariantConfig.from_variant(
        args.variant,
        base_width=args.base_width,
        image_size=args.size,
        lesion_classes=1 if args.classes == "binary" else 3,
        transformer=tcfg,
    )


def cmd_generate(args) -> int:
    from .data.synthetic import generate_synthetic

    m = generate_synthetic(args.out, args.count, args.size, args.classes, args.seed, args.folds)
    log.info("wrote %d samples to %s", len(m.records), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .data.manifest import read_manifest
    from .train import TrainConfig, load_samples, train

    base = TrainConfig.paper_recipe() if args.paper_recipe else TrainConfig()
    cfg = TrainConfig(
        epochs=args.epochs if args.epochs is not None else base.epochs,
        batch=args.batch if args.batch is not None else base.batch,
        lr=args.lr if args.lr is not None else base.lr,
        seed=args.seed,
        out_dir=args.out,
    )
    model_cfg = _model_config(args)
    train_s, val_s = load_samples(read_manifest(args.data), args.fold)
    result = train(model_cfg, cfg, train_s, val_s)
    log.info("best validation lesion Dice %.4f at epoch %d", result.best_val_dice, result.best_epoch)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .data.manifest import read_manifest
    from .train import evaluate, load_samples

    _, held = load_samples(read_manifest(args.data), args.fold)
    if not held:
        raise ValueError(f"fold {args.fold} is empty")
    text = evaluate(args.checkpoint, held, args.batch).to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_predict(args) -> int:
    from .train import predict

    for kind, path in predict(args.checkpoint, args.image, args.out).items():
        log.info("%s -> %s", kind, path)
    return EXIT_OK


def cmd_params(args) -> int:
    from .model import DISPLAY_NAMES, params_count

    cfg = _model_config(args)
    counts = params_count(cfg)
    print(f"variant {DISPLAY_NAMES[cfg.variant]} size={cfg.image_size} base_width={cfg.base_width}")
    for prefix, n in counts.items():
        print(f"{prefix.rstrip('.'):<16} {n:>14,}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import OP_TOL, run_suite

    worst = 0.0
    failed = 0
    for name, err, tol in run_suite(seed=args.seed):
        # the whole-model probe keeps its own looser bound
        limit = args.tol if tol == OP_TOL else tol
        ok = err <= limit
        failed += not ok
        worst = max(worst, err)
        print(f"{'PASS' if ok else 'FAIL'} {name} rel_err={err:.3e} tol={limit:.0e}")
    print(f"worst={worst:.3e} failed={failed}")
    return EXIT_OK if failed == 0 else EXIT_RUNTIME


COMMANDS = {
    "generate-data": cmd_generate,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "params": cmd_params,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr
    )
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError, KeyError) as exc:
        print(f"dtrattunet {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
