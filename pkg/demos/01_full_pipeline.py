"""End-to-end walkthrough on a small workspace: toy corpora, pretraining,
encoder training, unconstrained fine-tune, pseudo-pair generation, the
constrained fine-tune, and a first stylized portrait.

Runs in a couple of minutes on a laptop CPU. Pass --workspace to keep the
result around; later demos reuse it.

    python3 demos/01_full_pipeline.py --workspace /tmp/facestyle_demo
"""

import argparse
import json
import sys
import time
from pathlib import Path

from facestyle.cli import main as cli

SMALL = {
    "generator": {"resolution": 32, "latent_dim": 128, "channel_base": 64, "mapping_layers": 2},
    "pretrain": {"iterations": 120, "batch_size": 8},
    "encoders": {"steps": 60, "batch_size": 4},
    "pairs": {"iterations": 40},
    # low lr + per-step R1: on a ten-image style set the discriminator
    # memorizes, and an unregularized game blows the generator up
    "finetune": {"iterations": 150, "batch_size": 4, "lr": 0.005,
                 "r1_weight": 50.0, "r1_interval": 1},
    "evaluate": {"count": 24},
}


def run(*argv):
    print(f"\n$ facestyle {' '.join(argv)}")
    t0 = time.time()
    code = cli(list(argv))
    print(f"  [{time.time() - t0:.1f}s]")
    if code != 0:
        sys.exit(code)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workspace", default="/tmp/facestyle_demo")
    args = ap.parse_args()

    root = Path(args.workspace)
    root.mkdir(parents=True, exist_ok=True)
    cfg = root / "small.json"
    cfg.write_text(json.dumps(SMALL, indent=1))
    ws = str(root / "ws")
    base = ["--workspace", ws, "--config", str(cfg)]

    run("make-toy-data", *base, "--content-count", "32", "--style-count", "10",
        "--styles", "cartoon")
    run("pretrain", *base)
    run("train-encoders", *base)
    run("finetune-unconstrained", *base, "--style", "cartoon")
    run("make-pairs", *base, "--style", "cartoon")
    run("finetune", *base, "--style", "cartoon")
    run("evaluate", *base, "--style", "cartoon")

    portrait = str(Path(ws) / "data" / "content" / "img_00000.png")
    out = str(root / "stylized.png")
    run("stylize", *base, "--style", "cartoon", "--input", portrait, "--output", out)
    print(f"\nstylized portrait written to {out}")
    print(f"workspace kept at {ws}; demos 02/03 build on it")


if __name__ == "__main__":
    main()
