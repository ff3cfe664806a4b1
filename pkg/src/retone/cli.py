"""Command-line interface exposing every pipeline stage.

Each subcommand is a thin wrapper over the library; results are byte-identical
to direct library calls. Operational failures exit 1 with a one-line
diagnostic; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from retone.errors import RetoneError


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retone",
        description="Bit-depth companding and inverse halftoning pipelines.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("compress", help="reduce an image to L significant bits")
    p.add_argument("--bits", type=int, required=True, metavar="L")
    p.add_argument("--source-bits", type=int, default=8, metavar="H")
    p.add_argument("input")
    p.add_argument("output")

    p = sub.add_parser("rescale", help="stretch a compressed image to the full display range")
    p.add_argument("--bits", type=int, required=True, metavar="L")
    p.add_argument("--source-bits", type=int, default=8, metavar="H")
    p.add_argument("input")
    p.add_argument("output")

    p = sub.add_parser("halftone", help="Floyd-Steinberg error-diffusion halftone")
    p.add_argument("input")
    p.add_argument("output")

    for name, help_text in (
        ("expand", "restore a bit-compressed image with a trained model"),
        ("inverse", "restore a halftoned image with a trained model"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--ckpt", required=True)
        p.add_argument("input")
        p.add_argument("output")

    p = sub.add_parser("train", help="train a restoration model")
    p.add_argument("--config", required=True, help="key = value training configuration file")
    p.add_argument("--corpus", required=True, help="directory of PNG/PGM/PPM images")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--fig", help="save a loss-curve figure here")

    p = sub.add_parser("eval", help="score degraded and restored images against originals")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--spec", required=True, help='degradation, e.g. "compand:3:color" or "halftone:gray"')
    p.add_argument("--csv", help="write per-image CSV here")
    p.add_argument("--fig", help="save a PSNR bar figure here")

    p = sub.add_parser("hist", help="intensity histogram of an image")
    p.add_argument("input")
    p.add_argument("--csv", help="write bin counts as CSV here")
    p.add_argument("--fig", help="save a histogram figure here")
    p.add_argument("--per-channel", action="store_true")

    p = sub.add_parser("gradcheck", help="finite-difference checks of every layer backward")
    p.add_argument("--full", action="store_true", help="add the end-to-end network check")

    p = sub.add_parser("study", help="train per-tap variants and compare restored quality")
    p.add_argument("--config", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--eval-corpus", required=True)
    p.add_argument("--taps", default="conv1_1,conv3_1")
    p.add_argument("--csv", help="write the comparison as CSV here")
    p.add_argument("--fig", help="save a comparison figure here")

    p = sub.add_parser("corpus", help="generate a deterministic synthetic image corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--channels", choices=("gray", "color"), default="color")
    p.add_argument("--seed", type=int, default=0)

    return parser


def _cmd_compress(args) -> int:
    from retone.companding import compress_bits
    from retone.image_io import load_image, save_image

    save_image(compress_bits(load_image(args.input), args.bits, args.source_bits), args.output)
    return 0


def _cmd_rescale(args) -> int:
    from retone.companding import rescale_full_range
    from retone.image_io import load_image, save_image

    save_image(rescale_full_range(load_image(args.input), args.bits, args.source_bits), args.output)
    return 0


def _cmd_halftone(args) -> int:
    from retone.halftone import floyd_steinberg
    from retone.image_io import load_image, save_image

    save_image(floyd_steinberg(load_image(args.input)), args.output)
    return 0


def _cmd_restore(args) -> int:
    from retone.harness import Checkpoint, expand
    from retone.image_io import load_image, save_image

    ckpt = Checkpoint.load(args.ckpt)
    save_image(expand(ckpt, load_image(args.input)), args.output)
    return 0


def _cmd_train(args) -> int:
    from retone.harness import Checkpoint, TrainingConfig, train

    cfg = TrainingConfig.from_file(args.config)
    if args.seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=args.seed)
    resume = Checkpoint.load(args.resume) if args.resume else None
    ckpt = train(cfg, args.corpus, resume=resume, out_path=args.out)
    ckpt.save(args.out)
    print(f"wrote {args.out} (iteration {ckpt.iteration})")
    if args.fig:
        from retone.figures import save_loss_figure

        save_loss_figure(ckpt.loss_history, args.fig)
        print(f"wrote {args.fig}")
    return 0


def _cmd_eval(args) -> int:
    from retone.harness import Checkpoint, DegradationSpec, evaluate

    ckpt = Checkpoint.load(args.ckpt)
    report = evaluate(ckpt, args.corpus, DegradationSpec.parse(args.spec))
    sys.stdout.write(report.to_text())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
        print(f"wrote {args.csv}")
    if args.fig:
        from retone.figures import save_eval_figure

        save_eval_figure(report, args.fig)
        print(f"wrote {args.fig}")
    return 0


def _cmd_hist(args) -> int:
    from retone.image_io import intensity_histogram, load_image

    img = load_image(args.input)
    hist = intensity_histogram(img, per_channel=args.per_channel)
    bins = hist.bins if hist.per_channel else hist.bins[None, :]
    for value in range(256):
        counts = bins[:, value]
        if counts.any():
            joined = " ".join(f"{int(c):>8d}" for c in counts)
            print(f"{value:>3d}  {joined}")
    print(f"total {hist.total()}")
    if args.csv:
        header = "intensity," + ",".join(f"ch{c}" for c in range(bins.shape[0]))
        lines = [header]
        for value in range(256):
            lines.append(f"{value}," + ",".join(str(int(c)) for c in bins[:, value]))
        Path(args.csv).write_text("\n".join(lines) + "\n")
        print(f"wrote {args.csv}")
    if args.fig:
        from retone.figures import save_histogram_figure

        save_histogram_figure({Path(args.input).name: hist}, args.fig)
        print(f"wrote {args.fig}")
    return 0


def _cmd_gradcheck(args) -> int:
    from retone.nn.gradcheck import standard_suite

    reports = standard_suite(full=args.full)
    for rep in reports:
        print(rep.line())
    return 0 if all(r.passed for r in reports) else 1


def _cmd_study(args) -> int:
    from retone.harness import TrainingConfig, layer_study

    cfg = TrainingConfig.from_file(args.config)
    taps = tuple(t.strip() for t in args.taps.split(",") if t.strip())
    report = layer_study(cfg, args.corpus, args.eval_corpus, taps=taps)
    sys.stdout.write(report.to_text())
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
        print(f"wrote {args.csv}")
    if args.fig:
        from retone.figures import save_study_figure

        save_study_figure(report, args.fig)
        print(f"wrote {args.fig}")
    return 0


def _cmd_corpus(args) -> int:
    from retone.corpus import make_corpus

    channels = 1 if args.channels == "gray" else 3
    paths = make_corpus(args.out, args.count, size=args.size, channels=channels, seed=args.seed)
    print(f"wrote {len(paths)} images to {args.out}")
    return 0


_HANDLERS = {
    "compress": _cmd_compress,
    "rescale": _cmd_rescale,
    "halftone": _cmd_halftone,
    "expand": _cmd_restore,
    "inverse": _cmd_restore,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "hist": _cmd_hist,
    "gradcheck": _cmd_gradcheck,
    "study": _cmd_study,
    "corpus": _cmd_corpus,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = _build_parser().parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except RetoneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
