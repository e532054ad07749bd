"""Command-line entry point: ``smcfuse {fuse,train,evaluate,scan-dump,gradcheck,synth}``.

Exit codes: 0 ok, 2 usage, 3 I/O (missing or malformed files), 4 shape or
validation error, 5 numerical failure. The resolved configuration is printed
to stderr on every run so stdout stays machine-readable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError
from .fusenet import FusionConfig, FusionModel, fuse_images, load_config, parse_overrides
from .metrics import MetricReport, evaluate
from .netpbm import NetpbmError, read_pnm, write_pnm
from .training import NumericalError, Trainer, load_model

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_SHAPE, EXIT_NUMERIC = 0, 2, 3, 4, 5


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _overrides(items: list[str] | None) -> dict:
    pairs = {}
    for item in items or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}", EXIT_USAGE)
        k, v = item.split("=", 1)
        pairs[k.strip()] = v
    try:
        return parse_overrides(pairs)
    except KeyError as exc:
        raise CliError(str(exc.args[0]), EXIT_USAGE) from exc
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from exc


def _resolve_config(path: str | None, seed: int, sets: list[str] | None) -> FusionConfig:
    values = _overrides(sets)
    values["seed"] = seed
    try:
        if path:
            return load_config(path, **values)
        return FusionConfig(**values)
    except OSError as exc:
        raise CliError(f"cannot read config: {exc}", EXIT_IO) from exc
    except (KeyError, ValueError) as exc:
        raise CliError(f"bad config: {exc}", EXIT_USAGE) from exc


def _print_resolved(settings: dict) -> None:
    for k, v in settings.items():
        print(f"{k} = {v}", file=sys.stderr)


def _read_image(path: str) -> np.ndarray:
    try:
        return read_pnm(path)
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}", EXIT_IO) from exc
    except NetpbmError as exc:
        raise CliError(f"{path}: {exc}", EXIT_IO) from exc


# ITU-R BT.601 luma and chroma, chroma offset 0.5 in [0, 1] units
def rgb_to_ycbcr(rgb: np.ndarray) -> np.ndarray:
    r, g, b = rgb
    y = 0.299 * r + 0.587 * g + 0.114 * b
    return np.stack([y, 0.5 + 0.564 * (b - y), 0.5 + 0.713 * (r - y)])


def ycbcr_to_rgb(ycc: np.ndarray) -> np.ndarray:
    y, cb, cr = ycc[0], ycc[1] - 0.5, ycc[2] - 0.5
    r = y + cr / 0.713
    b = y + cb / 0.564
    g = (y - 0.299 * r - 0.114 * b) / 0.587
    return np.clip(np.stack([r, g, b]), 0.0, 1.0)


def _luma(img: np.ndarray) -> np.ndarray:
    return rgb_to_ycbcr(img)[:1] if img.shape[0] == 3 else img


def fuse_pair(model: FusionModel, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Fuse two images; colour inputs are fused on luma, chroma is taken from ``a``."""
    if a.shape[1:] != b.shape[1:]:
        raise CliError(f"image sizes differ: {a.shape[2]}x{a.shape[1]} vs {b.shape[2]}x{b.shape[1]}",
                       EXIT_SHAPE)
    fused_y = fuse_images(model, _luma(a), _luma(b))
    if a.shape[0] == 3:
        ycc = rgb_to_ycbcr(a)
        ycc[0] = fused_y[0]
        return ycbcr_to_rgb(ycc)
    return fused_y


def cmd_fuse(args) -> int:
    if args.model:
        try:
            model = load_model(args.model)
        except OSError as exc:
            raise CliError(f"cannot read {args.model}: {exc}", EXIT_IO) from exc
        except (CheckpointError, KeyError, TypeError) as exc:
            raise CliError(f"{args.model}: malformed checkpoint ({exc})", EXIT_IO) from exc
    else:
        model = FusionModel(_resolve_config(args.config, args.seed, args.set))
    _print_resolved(model.config.to_dict())
    a, b = _read_image(args.image_a), _read_image(args.image_b)
    try:
        fused = fuse_pair(model, a, b)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_SHAPE) from exc
    report = evaluate(_luma(fused), _luma(a), _luma(b), (args.out, args.image_a, args.image_b))
    out = Path(args.out)
    try:
        write_pnm(out, fused)
        sidecar = Path(args.metrics) if args.metrics else out.with_name(out.name + ".json")
        sidecar.write_text(json.dumps(report.to_dict(), indent=2) + "\n")
    except OSError as exc:
        raise CliError(f"cannot write output: {exc}", EXIT_IO) from exc
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def _split(pairs: list, holdout: int) -> tuple[list, list]:
    if holdout < 0 or holdout >= len(pairs):
        raise CliError(f"holdout must be in [0, {len(pairs) - 1}] for {len(pairs)} pairs", EXIT_USAGE)
    cut = len(pairs) - holdout
    return pairs[:cut], pairs[cut:]


def mean_report(model: FusionModel, pairs: list) -> dict:
    reports = [evaluate(fuse_images(model, a, b), a, b) for a, b in pairs]
    keys = ("MI", "SF", "AG", "CC", "SCD", "MS_SSIM")
    return {k: float(np.mean([getattr(r, k) for r in reports])) for k in keys} | {"pairs": len(pairs)}


def cmd_train(args) -> int:
    from .synth import read_corpus

    try:
        pairs = read_corpus(args.corpus)
    except (OSError, NetpbmError) as exc:
        raise CliError(f"cannot read corpus: {exc}", EXIT_IO) from exc
    train_pairs, held = _split(pairs, args.holdout)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        if args.resume:
            trainer = Trainer.resume(args.resume, train_pairs)
        else:
            trainer = Trainer(_resolve_config(args.config, args.seed, args.set), train_pairs)
    except CheckpointError as exc:
        raise CliError(f"{args.resume}: malformed checkpoint ({exc})", EXIT_IO) from exc
    except ValueError as exc:
        raise CliError(str(exc), EXIT_SHAPE) from exc
    _print_resolved(trainer.config.to_dict())
    log_path = out / "train_log.jsonl"
    with open(log_path, "a" if args.resume else "w") as log:
        def emit(rec):
            log.write(rec.to_json() + "\n")
        try:
            trainer.run(args.steps, log=emit, checkpoint_dir=out)
        except NumericalError as exc:
            raise CliError(str(exc), EXIT_NUMERIC) from exc
        except ValueError as exc:
            raise CliError(str(exc), EXIT_SHAPE) from exc
    trainer.save(out / "final.ckpt")
    summary = mean_report(trainer.model, held) if held else {"pairs": 0}
    summary["steps"] = trainer.step
    (out / "heldout_metrics.json").write_text(json.dumps(summary, indent=2) + "\n")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    _print_resolved({"fused": args.fused, "image_a": args.image_a, "image_b": args.image_b})
    f, a, b = (_read_image(p) for p in (args.fused, args.image_a, args.image_b))
    if not f.shape[1:] == a.shape[1:] == b.shape[1:]:
        raise CliError("fused and source images must share a size", EXIT_SHAPE)
    try:
        report: MetricReport = evaluate(_luma(f), _luma(a), _luma(b), (args.fused, args.image_a, args.image_b))
    except ValueError as exc:
        raise CliError(str(exc), EXIT_SHAPE) from exc
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def cmd_scan_dump(args) -> int:
    from .scan import make_order

    _print_resolved({"kind": args.kind, "H": args.H, "W": args.W})
    try:
        order = make_order(args.kind, args.H, args.W)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_SHAPE) from exc
    print(json.dumps(order.to_json()))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .gradsuite import format_results, run_suite

    _print_resolved({"scope": args.scope, "seed": args.seed, "tolerance": args.tolerance})
    results = run_suite(args.scope, seed=args.seed, tolerance=args.tolerance)
    print(format_results(results))
    return EXIT_OK if all(r.passed for _, r in results) else EXIT_NUMERIC


def cmd_synth(args) -> int:
    from .synth import write_corpus

    _print_resolved({"out": args.out, "count": args.count, "size": args.size, "seed": args.seed})
    if args.count < 1 or args.size < 16 or args.size % 2:
        raise CliError("count must be >= 1 and size an even number >= 16", EXIT_SHAPE)
    try:
        paths = write_corpus(args.out, args.count, args.size, args.seed)
    except OSError as exc:
        raise CliError(f"cannot write corpus: {exc}", EXIT_IO) from exc
    print(f"wrote {len(paths)} images to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    from .gradsuite import SCOPES
    from .scan import SCAN_KINDS

    parser = argparse.ArgumentParser(prog="smcfuse", description="State-space image fusion toolkit.")
    parser.add_argument("--seed", type=int, default=42, help="global seed (default 42)")
    sub = parser.add_subparsers(dest="command", required=True)

    def model_opts(p):
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")

    p = sub.add_parser("fuse", help="fuse two images")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.add_argument("out")
    p.add_argument("--model", help="checkpoint; an untrained model is built from the config if omitted")
    p.add_argument("--metrics", help="metrics sidecar path (default <out>.json)")
    model_opts(p)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train", help="train on a corpus directory")
    p.add_argument("corpus")
    p.add_argument("out")
    p.add_argument("--steps", type=int, help="number of steps (default: config epochs x pairs)")
    p.add_argument("--holdout", type=int, default=0, help="trailing pairs kept out for evaluation")
    p.add_argument("--resume", help="checkpoint to continue from")
    model_opts(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="metrics for a fused image against its sources")
    p.add_argument("fused")
    p.add_argument("image_a")
    p.add_argument("image_b")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("scan-dump", help="print a scan order as JSON")
    p.add_argument("kind", choices=SCAN_KINDS)
    p.add_argument("H", type=int)
    p.add_argument("W", type=int, nargs="?", default=1)
    p.set_defaults(func=cmd_scan_dump)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suites")
    p.add_argument("scope", choices=SCOPES)
    p.add_argument("--tolerance", type=float)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic complementary corpus")
    p.add_argument("out")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--size", type=int, default=32)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
