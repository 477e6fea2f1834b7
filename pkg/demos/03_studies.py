"""The three built-in experiment commands, printed as tables: which pair level
to supervise on, which space to encode content into, and which space inverts a
style reference best.

Needs the workspace from demos/01_full_pipeline.py. The numbers are recorded,
not ranked; at toy scale the orderings can differ run to run.

    python3 demos/03_studies.py --workspace /tmp/facestyle_demo
"""

import argparse
import json
import sys
from pathlib import Path

from facestyle.cli import main as cli


def show(root, which, style):
    report = json.loads(
        (root / "ws" / "reports" / f"study_{which}_{style}.json").read_text()
    )
    rows = report["rows"]
    keys = [k for k in rows[0] if isinstance(rows[0][k], (int, float, str))]
    print(f"\n== {which}")
    print("  " + "  ".join(f"{k:>18}" for k in keys))
    for r in rows:
        cells = [f"{r[k]:>18.4f}" if isinstance(r[k], float) else f"{r[k]:>18}" for k in keys]
        print("  " + "  ".join(cells))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workspace", default="/tmp/facestyle_demo")
    ap.add_argument("--style", default="cartoon")
    args = ap.parse_args()

    root = Path(args.workspace)
    base = ["--workspace", str(root / "ws"), "--config", str(root / "small.json")]

    for which, extra in (
        ("pair-level", ["--iters", "40", "--count", "16"]),
        ("content-space", ["--count", "8"]),
        ("ref-space", ["--iters", "40"]),
    ):
        code = cli(["study", which, *base, "--style", args.style, *extra])
        if code != 0:
            sys.exit(code)
        show(root, which, args.style)


if __name__ == "__main__":
    main()
