"""rml2sigset command line: convert an RML dataset file to SIGSET.

Exit codes: 0 success, 1 usage error, 2 data/format error.
"""

from __future__ import annotations

import argparse
import sys

from .convert import FLAVORS, ConvertError, convert, detect_source


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rml2sigset", description=__doc__)
    p.add_argument("--in", dest="input", required=True, help="source dataset file")
    p.add_argument("--flavor", required=True, choices=FLAVORS)
    p.add_argument("--out", required=True, help="output SIGSET path")
    p.add_argument("--manifest", help="manifest path (default: <out>.manifest)")
    p.add_argument("--split-seed", dest="split_seed", type=int, default=0)
    p.add_argument("--classes", help="comma list of class names to keep")
    p.add_argument("--snrs", help="comma list of SNR levels (dB) to keep")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    class_filter = args.classes.split(",") if args.classes else None
    snr_filter = [int(s) for s in args.snrs.split(",")] if args.snrs else None
    try:
        source = detect_source(args.input, args.flavor)
        n = convert(source, args.out, class_filter=class_filter,
                    snr_filter=snr_filter, split_seed=args.split_seed,
                    manifest_path=args.manifest)
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ConvertError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {n} samples ({len(source.classes)} source classes, "
          f"{len(source.snr_levels)} SNR levels, L={source.length}) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
