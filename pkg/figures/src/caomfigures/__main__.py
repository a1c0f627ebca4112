"""Script interface: caom-figures KIND --input FILES --out IMAGE."""

from __future__ import annotations

import argparse
import glob
import sys

from .render import KINDS, FigureJob, render
from .readers import InputError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="caom-figures",
        description="render figures from simulator CSV and snapshot outputs",
    )
    parser.add_argument("kind", choices=sorted(KINDS))
    parser.add_argument("--input", nargs="+", required=True,
                        metavar="PATH_OR_GLOB")
    parser.add_argument("--out", required=True, metavar="IMAGE")
    parser.add_argument("--log-y", action="store_true")
    parser.add_argument("--title", default="")
    parser.add_argument("--decay-rate", type=float, default=None,
                        help="overlay exp(-rate t) on energy plots")
    parser.add_argument("--field", default="t",
                        help="snapshot field for heatmaps")
    args = parser.parse_args(argv)

    inputs: list[str] = []
    for pattern in args.input:
        hits = sorted(glob.glob(pattern))
        inputs.extend(hits if hits else [pattern])

    job = FigureJob(kind=args.kind, inputs=inputs, output=args.out,
                    log_y=args.log_y, title=args.title,
                    decay_rate=args.decay_rate, heat_field=args.field)
    try:
        extrema = render(job)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    for name, (lo, hi) in extrema.items():
        print(f"  {name}: [{lo:.6g}, {hi:.6g}]")
    return 0


if __name__ == "__main__":
    sys.exit(main())
