"""Batch figure tool: plot --kind <k> --in <csv> --out <png>."""
from __future__ import annotations

import argparse
import sys

from .render import KINDS, FigureRequest, RenderResult, render
from .schemas import SchemaError


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="diracgraph-plot",
                                     description="render figures from solver CSV artifacts")
    parser.add_argument("--kind", required=True, choices=KINDS)
    parser.add_argument("--in", dest="input_path", required=True, help="input CSV")
    parser.add_argument("--out", dest="output_path", required=True, help="output image")
    parser.add_argument("--log-y", action="store_true", help="logarithmic y axis")
    parser.add_argument("--title", default="")
    args = parser.parse_args(argv)
    try:
        result: RenderResult = render(FigureRequest(
            input_path=args.input_path,
            kind=args.kind,
            output_path=args.output_path,
            log_y=args.log_y,
            title=args.title,
        ))
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 2
    for key, value in sorted(result.annotations.items()):
        print(f"{key}={value!r}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
