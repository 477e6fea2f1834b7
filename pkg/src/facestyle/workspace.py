"""Workspace layout and configuration.

A workspace is a directory owning everything one deployment needs:

    config.json                      global defaults (deep-merged over
                                     built-in defaults; CLI flags win)
    data/content/*.png               real-domain corpus
    data/styles/<style>/*.png        style corpora
    models/pretrained/               generator.fsck + discriminator.fsck
    models/encoders/                 encoder_w / encoder_wplus / encoder_zplus
    models/styles/<style>/           gstar.fsck, generator.fsck, policy.json
    pairs/<style>/                   pseudo-pair datasets
    cache/refs/<style>/<hash>/       reference embeddings
    runs/<name>/                     training runs (config, logs, checkpoints)
    reports/                         evaluation and study output
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Any

from .encoder import Encoder, load_encoder
from .errors import ConfigError
from .generator import Generator, GeneratorConfig, load_generator
from .inversion import ReferenceCache
from .latent import Space
from .losses import FeatureNets, default_feature_nets
from .metrics import FidExtractor
from .stylize import NOISE_MIX_ANCHORS_18, StylePolicy, proportional_mix_indices

DEFAULT_CONFIG: dict[str, Any] = {
    "seed": 0,
    "generator": {
        "resolution": 64,
        "latent_dim": 512,
        "channel_base": 128,
        "mapping_layers": 4,
    },
    "feature_seed": 77,
    "fid_seed": 88,
    "fid_dim": 48,
    "styles": {
        "cartoon": {"truncation_psi": 0.7},
        "sketch": {"truncation_psi": 0.9},
    },
    "pretrain": {},
    "encoders": {},
    "pairs": {},
    "finetune": {},
    "evaluate": {"count": 64},
}

ENCODER_FILES = {
    Space.W: "encoder_w.fsck",
    Space.WPLUS: "encoder_wplus.fsck",
    Space.ZPLUS: "encoder_zplus.fsck",
}


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class Workspace:
    def __init__(self, root: str | Path, overrides: dict | None = None):
        self.root = Path(root)
        # copy: handing out the module-level dict would let callers mutate it
        cfg = copy.deepcopy(DEFAULT_CONFIG)
        cfg_path = self.root / "config.json"
        if cfg_path.is_file():
            try:
                cfg = deep_merge(cfg, json.loads(cfg_path.read_text()))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{cfg_path}: invalid JSON: {exc}") from exc
        if overrides:
            cfg = deep_merge(cfg, overrides)
        self.config = cfg
        self._nets: FeatureNets | None = None
        self._fid: FidExtractor | None = None

    # --- paths ---

    @property
    def content_dir(self) -> Path:
        return self.root / "data" / "content"

    def style_data_dir(self, style: str) -> Path:
        return self.root / "data" / "styles" / style

    @property
    def pretrained_dir(self) -> Path:
        return self.root / "models" / "pretrained"

    @property
    def encoders_dir(self) -> Path:
        return self.root / "models" / "encoders"

    def style_model_dir(self, style: str) -> Path:
        return self.root / "models" / "styles" / style

    def pairs_dir(self, style: str) -> Path:
        return self.root / "pairs" / style

    @property
    def refs_root(self) -> Path:
        return self.root / "cache" / "refs"

    def run_dir(self, name: str) -> Path:
        return self.root / "runs" / name

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    # --- config-derived objects ---

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(**self.config["generator"])

    def feature_nets(self) -> FeatureNets:
        if self._nets is None:
            self._nets = default_feature_nets(self.config["feature_seed"])
        return self._nets

    def fid_extractor(self) -> FidExtractor:
        if self._fid is None:
            self._fid = FidExtractor(self.config["fid_seed"], self.config["fid_dim"])
        return self._fid

    def reference_cache(self) -> ReferenceCache:
        return ReferenceCache(self.refs_root)

    def save_config(self) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / "config.json").write_text(json.dumps(self.config, sort_keys=True, indent=1))

    def section(self, name: str) -> dict:
        value = self.config.get(name, {})
        if not isinstance(value, dict):
            raise ConfigError(f"config section {name!r} must be an object")
        return value

    # --- model loading ---

    def load_pretrained(self) -> Generator:
        path = self.pretrained_dir / "generator.fsck"
        if not path.is_file():
            raise ConfigError(f"no pretrained generator at {path}; run the pretrain command")
        gen = load_generator(path)
        if gen.role != "pretrained":
            raise ConfigError(f"{path} holds a {gen.role!r} generator, expected pretrained")
        return gen

    def load_encoder_for(self, space: Space) -> Encoder:
        path = self.encoders_dir / ENCODER_FILES[space]
        if not path.is_file():
            raise ConfigError(f"no {space.value} encoder at {path}; run the train-encoders command")
        return load_encoder(path)

    def load_gstar(self, style: str) -> Generator:
        path = self.style_model_dir(style) / "gstar.fsck"
        if not path.is_file():
            raise ConfigError(
                f"no unconstrained fine-tuned generator at {path}; "
                f"run the finetune-unconstrained command"
            )
        return load_generator(path)

    def load_style_generator(self, style: str) -> Generator:
        path = self.style_model_dir(style) / "generator.fsck"
        if not path.is_file():
            raise ConfigError(f"no fine-tuned generator at {path}; run the finetune command")
        return load_generator(path)

    def style_psi(self, style: str) -> float:
        styles = self.section("styles")
        return float(styles.get(style, {}).get("truncation_psi", 0.9))

    def load_policy(self, style: str) -> StylePolicy:
        path = self.style_model_dir(style) / "policy.json"
        if not path.is_file():
            raise ConfigError(f"no style policy at {path}; run the finetune command")
        data = json.loads(path.read_text())
        return StylePolicy(**data)

    def write_policy(self, style: str, pair_level: int) -> StylePolicy:
        gen_cfg = self.generator_config()
        policy = StylePolicy(
            style_id=style,
            truncation_psi=self.style_psi(style),
            generator_path=str(self.style_model_dir(style) / "generator.fsck"),
            default_mix_indices=proportional_mix_indices(
                gen_cfg.layer_count, NOISE_MIX_ANCHORS_18
            ),
            pair_level=pair_level,
        )
        path = self.style_model_dir(style) / "policy.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(
                {
                    "style_id": policy.style_id,
                    "truncation_psi": policy.truncation_psi,
                    "generator_path": policy.generator_path,
                    "default_mix_indices": policy.default_mix_indices,
                    "pair_level": policy.pair_level,
                },
                sort_keys=True,
                indent=1,
            )
        )
        return policy

    def list_styles(self) -> list[str]:
        base = self.root / "models" / "styles"
        if not base.is_dir():
            return []
        return sorted(
            p.name for p in base.iterdir() if p.is_dir() and (p / "policy.json").is_file()
        )
