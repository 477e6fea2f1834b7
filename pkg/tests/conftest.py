"""Shared fixtures.

Unit tests run against a 16x16 generator so the whole suite stays fast; the
acceptance tests build their own 64x64 pipeline and live in
test_acceptance.py.
"""

from __future__ import annotations

import json

import pytest
import torch

torch.set_num_threads(1)

from facestyle.cli import main as cli_main
from facestyle.generator import Generator, GeneratorConfig
from facestyle.losses import default_feature_nets

TINY_OVERRIDES = {
    "generator": {"resolution": 16, "latent_dim": 64, "channel_base": 32, "mapping_layers": 2},
    "pretrain": {"iterations": 30, "batch_size": 4},
    "encoders": {"steps": 40, "batch_size": 4},
    "pairs": {"iterations": 8},
    "finetune": {"iterations": 12, "batch_size": 2},
    "evaluate": {"count": 8},
}


@pytest.fixture(scope="session")
def tiny_config() -> GeneratorConfig:
    return GeneratorConfig(resolution=16, latent_dim=64, channel_base=32, mapping_layers=2)


@pytest.fixture(scope="session")
def tiny_gen(tiny_config) -> Generator:
    gen = Generator(tiny_config, seed=0)
    gen.ensure_w_mean()
    return gen


@pytest.fixture(scope="session")
def nets():
    return default_feature_nets(7)


def run_cli(*argv: str) -> int:
    return cli_main(list(argv))


@pytest.fixture(scope="session")
def tiny_ws(tmp_path_factory):
    """A complete tiny workspace: toy data, pretrained generator, encoders,
    and both styles fine-tuned. Built once through the CLI."""
    root = tmp_path_factory.mktemp("tiny_ws")
    cfg_path = root / "overrides.json"
    cfg_path.write_text(json.dumps(TINY_OVERRIDES))
    ws_dir = root / "ws"
    base = ["--workspace", str(ws_dir), "--config", str(cfg_path)]
    assert run_cli("make-toy-data", *base, "--content-count", "24", "--style-count", "8") == 0
    assert run_cli("pretrain", *base) == 0
    assert run_cli("train-encoders", *base) == 0
    for style in ("cartoon", "sketch"):
        assert run_cli("finetune-unconstrained", *base, "--style", style) == 0
        assert run_cli("make-pairs", *base, "--style", style) == 0
        assert run_cli("finetune", *base, "--style", style) == 0
    return ws_dir, cfg_path
