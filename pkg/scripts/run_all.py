"""Trace, run the experiment grid and analyse the PON fabrics into one output directory."""
import argparse
import sys

from owcnet.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config")
    ap.add_argument("--out", default="results")
    ap.add_argument("--workers", type=int, default=-1)
    args = ap.parse_args()
    common = ["--out", args.out, "--workers", str(args.workers)]
    if args.config:
        common += ["--config", args.config]
    for cmd in ("trace", "experiment", "pon", "validate"):
        code = main([cmd, *common])
        if code:
            sys.exit(code)
