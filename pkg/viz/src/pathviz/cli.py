"""Command line: pathviz render --run DIR [--run DIR ...] --kind KIND --out FILE."""

from __future__ import annotations

import argparse
import sys

import yaml

from .errors import MalformedExportError, MissingExportError
from .figures import (count_high_potential, render_metrics, render_opinion_hist,
                      render_path_panels)
from .loader import load_config

KINDS = ("path", "metrics", "opinion")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pathviz",
                                     description="render figures from exported run dirs")
    sub = parser.add_subparsers(dest="verb", required=True)
    render = sub.add_parser("render", help="render one figure")
    render.add_argument("--run", action="append", required=True, metavar="DIR",
                        help="run directory; repeat to overlay (metrics only)")
    render.add_argument("--kind", choices=KINDS, required=True)
    render.add_argument("--out", required=True, metavar="FILE")
    render.add_argument("--style-seed", type=int, default=0)
    return parser


def cmd_render(args) -> int:
    runs = args.run
    if args.kind != "metrics" and len(runs) != 1:
        raise MalformedExportError(f"--kind {args.kind} takes exactly one --run")
    if args.kind == "path":
        out = render_path_panels(runs[0], args.out, style_seed=args.style_seed)
        if load_config(runs[0])["action"].get("potential_id") is not None:
            count, threshold, peak = count_high_potential(runs[0])
            print(f"high-potential samples: {count} "
                  f"(V > {threshold:.3f}, peak {peak:.3f})")
    elif args.kind == "opinion":
        out = render_opinion_hist(runs[0], args.out, style_seed=args.style_seed)
    else:
        out = render_metrics(runs, args.out, style_seed=args.style_seed)
    print(f"wrote: {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return cmd_render(args)
    except (MissingExportError, MalformedExportError, KeyError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
