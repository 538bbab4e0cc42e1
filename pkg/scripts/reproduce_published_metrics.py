#!/usr/bin/env python3
"""Score every reference confusion matrix shipped under data/vardial2017/.

Each file is run through the same code path as `dialectid metrics --cm`,
printing one summary line per matrix.  Exits nonzero if any file fails to
score.
"""
import argparse
import pathlib
import sys

from dialectid.cli import main as cli_main

DEFAULT_DIR = pathlib.Path(__file__).resolve().parent.parent / "data" / "vardial2017"


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--matrix-dir", type=pathlib.Path, default=DEFAULT_DIR,
                        help="directory of confusion-matrix TSV files")
    args = parser.parse_args(argv)

    files = sorted(args.matrix_dir.glob("*.tsv"))
    if not files:
        print(f"no matrix files in {args.matrix_dir}", file=sys.stderr)
        return 1
    worst = 0
    for path in files:
        print(f"{path.name}: ", end="", flush=True)
        worst = max(worst, cli_main(["metrics", "--cm", str(path)]))
    return worst


if __name__ == "__main__":
    sys.exit(main())
