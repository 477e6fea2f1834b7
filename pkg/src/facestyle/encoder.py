"""Image-to-latent encoders with a feature-pyramid backbone.

Three variants, chosen by target_space:

    W      one style head on the coarsest pyramid level; a single shared
           code row broadcast at decode time
    WPlus  one head per synthesis layer, split coarse/middle/fine across
           pyramid levels
    ZPlus  same head layout, but outputs live in Z+ and decode through the
           generator's retained mapping network

W/W+ heads predict an offset from the generator's mean W (stored as an
anchor buffer), Z+ heads predict raw z rows around zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointError, ConfigError, NumericsError
from .generator import Generator, GeneratorConfig
from .images import validate_image
from .latent import LatentCode, Space
from .losses import FeatureNets, identity_loss, lpips
from .networks import ConvLayer, EqualConv2d, EqualLinear

ENCODER_SPACES = (Space.W, Space.WPLUS, Space.ZPLUS)


def head_split(layer_count: int) -> tuple[int, int, int]:
    """How many style heads read the coarse/middle/fine pyramid levels.

    Proportions follow the 3/18, 4/18, 11/18 split of the full-scale
    18-layer setup, with at least one head per level.
    """
    coarse = max(1, round(layer_count * 3 / 18))
    middle = max(1, round(layer_count * 7 / 18) - coarse)
    fine = layer_count - coarse - middle
    if fine < 1:
        raise ConfigError(f"layer_count {layer_count} too small for a 3-level split")
    return coarse, middle, fine


class StyleHead(nn.Module):
    """Collapse a (C, S, S) pyramid feature to one latent row."""

    def __init__(self, channels: int, spatial: int, out_dim: int, rng: torch.Generator):
        super().__init__()
        downs = []
        s = spatial
        while s > 1:
            downs.append(ConvLayer(channels, channels, 3, rng, down=True))
            s //= 2
        self.downs = nn.Sequential(*downs)
        self.fc = EqualLinear(channels, out_dim, rng)

    def forward(self, feat: torch.Tensor) -> torch.Tensor:
        return self.fc(self.downs(feat).flatten(1))


class Encoder(nn.Module):
    def __init__(self, gen_config: GeneratorConfig, target_space: Space, seed: int = 0):
        super().__init__()
        if target_space not in ENCODER_SPACES:
            raise ConfigError(f"encoder target_space must be one of "
                              f"{[s.value for s in ENCODER_SPACES]}, got {target_space.value}")
        if gen_config.resolution < 16:
            raise ConfigError("encoder needs resolution >= 16")
        rng = torch.Generator().manual_seed(seed)
        self.gen_config = gen_config
        self.target_space = target_space
        r = gen_config.resolution
        d = gen_config.latent_dim
        pyr = 64
        self.stem = ConvLayer(3, 32, 3, rng)
        self.down1 = ConvLayer(32, 48, 3, rng, down=True)   # r/2
        self.down2 = ConvLayer(48, 64, 3, rng, down=True)   # r/4  fine
        self.down3 = ConvLayer(64, 80, 3, rng, down=True)   # r/8  middle
        self.down4 = ConvLayer(80, 96, 3, rng, down=True)   # r/16 coarse
        self.lat_fine = EqualConv2d(64, pyr, 1, rng)
        self.lat_mid = EqualConv2d(80, pyr, 1, rng)
        self.lat_coarse = EqualConv2d(96, pyr, 1, rng)

        if target_space == Space.W:
            self.heads = nn.ModuleList([StyleHead(pyr, r // 16, d, rng)])
            self.level_of = [0]
        else:
            n_coarse, n_middle, n_fine = head_split(gen_config.layer_count)
            heads: list[StyleHead] = []
            self.level_of = []
            for level, count, spatial in (
                (0, n_coarse, r // 16),
                (1, n_middle, r // 8),
                (2, n_fine, r // 4),
            ):
                for _ in range(count):
                    heads.append(StyleHead(pyr, spatial, d, rng))
                    self.level_of.append(level)
            self.heads = nn.ModuleList(heads)
        self.register_buffer("anchor", torch.zeros(1, d))

    def set_anchor(self, gen: Generator) -> None:
        """W/W+ variants predict offsets from the generator's mean W."""
        if self.target_space != Space.ZPLUS:
            self.anchor.copy_(gen.ensure_w_mean())

    def pyramid(self, x: torch.Tensor) -> list[torch.Tensor]:
        f1 = self.down2(self.down1(self.stem(x)))
        f2 = self.down3(f1)
        f3 = self.down4(f2)
        coarse = self.lat_coarse(f3)
        middle = self.lat_mid(f2) + F.interpolate(coarse, scale_factor=2, mode="nearest")
        fine = self.lat_fine(f1) + F.interpolate(middle, scale_factor=2, mode="nearest")
        return [coarse, middle, fine]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 3, R, R) -> (B, rows, d) codes in the target space."""
        levels = self.pyramid(x)
        rows = [head(levels[lv]) for head, lv in zip(self.heads, self.level_of)]
        out = torch.stack(rows, dim=1)
        return out + self.anchor.unsqueeze(0)


def encode(image: torch.Tensor, enc: Encoder) -> LatentCode:
    """Single image -> latent code in the encoder's target space."""
    validate_image(image, enc.gen_config.resolution)
    with torch.no_grad():
        rows = enc(image.unsqueeze(0))[0]
    if enc.target_space == Space.W:
        return LatentCode(Space.W, rows)
    return LatentCode(enc.target_space, rows)


def decode_for_training(codes: torch.Tensor, enc: Encoder, gen: Generator) -> torch.Tensor:
    """Batched decode of encoder outputs during training (no bit contract)."""
    if enc.target_space == Space.W:
        styles = codes.expand(-1, gen.layer_count, -1)
    elif enc.target_space == Space.WPLUS:
        styles = codes
    else:
        b, rows, d = codes.shape
        styles = gen.mapping(codes.reshape(b * rows, d)).reshape(b, rows, d)
    return gen.synthesize_batch(styles)


@dataclass
class EncoderTrainConfig:
    steps: int = 600
    batch_size: int = 8
    lr: float = 1e-3
    lambda_lpips: float = 1.0
    lambda_id: float = 0.1
    seed: int = 0


def train_encoder(
    enc: Encoder,
    gen: Generator,
    images: torch.Tensor,
    cfg: EncoderTrainConfig,
    nets: FeatureNets,
) -> list[float]:
    """Train on reconstruction: pixel L2 + perceptual + identity.

    The generator stays frozen. Returns the loss curve; raises NumericsError
    if the loss leaves finite territory. steps=0 is a no-op by construction.
    """
    if images.dim() != 4 or images.shape[0] < 1:
        raise ConfigError(f"need a non-empty (N, 3, R, R) image tensor, got {tuple(images.shape)}")
    if cfg.steps < 0 or cfg.batch_size < 1 or cfg.lr < 0:
        raise ConfigError("steps/batch_size/lr out of range")
    enc.set_anchor(gen)
    gen.requires_grad_(False)
    opt = torch.optim.Adam(enc.parameters(), lr=cfg.lr)
    rng = torch.Generator().manual_seed(cfg.seed)
    curve: list[float] = []
    for step in range(cfg.steps):
        idx = torch.randint(0, images.shape[0], (cfg.batch_size,), generator=rng)
        batch = images[idx]
        recon = decode_for_training(enc(batch), enc, gen)
        loss = F.mse_loss(recon, batch)
        loss = loss + cfg.lambda_lpips * lpips(recon, batch, nets.perceptual)
        loss = loss + cfg.lambda_id * identity_loss(recon, batch, nets.identity)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NumericsError(f"encoder training diverged at step {step}: loss={value}")
        curve.append(value)
        opt.zero_grad()
        loss.backward()
        opt.step()
    return curve


def save_encoder(enc: Encoder, path: str | Path) -> str:
    config = {
        "generator": enc.gen_config.to_dict(),
        "target_space": enc.target_space.value,
    }
    return save_checkpoint(path, "encoder", enc.state_dict(), config, {})


def load_encoder(path: str | Path) -> Encoder:
    ckpt = load_checkpoint(path, expected_kind="encoder")
    gen_config = GeneratorConfig.from_dict(ckpt.config["generator"])
    enc = Encoder(gen_config, Space(ckpt.config["target_space"]), seed=0)
    try:
        enc.load_state_dict(ckpt.tensors, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: state does not fit the declared config: {exc}") from exc
    return enc
