"""Command-line entry point for the exporter."""

from __future__ import annotations

import argparse
import sys

from vggexport.exporter import ExportError, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="vgg-export",
        description="Export the VGG-19 conv1_1..conv5_1 weights into an NNWT container.",
    )
    parser.add_argument("--out", required=True, help="output NNWT path")
    parser.add_argument(
        "--source",
        default="torchvision",
        help='"torchvision" (download pretrained weights) or a path to a saved state dict',
    )
    args = parser.parse_args(argv)
    try:
        manifest = export(args.out, source=args.source)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    sys.stdout.write(manifest.text())
    return 0


if __name__ == "__main__":
    sys.exit(main())
