"""Style-based generator and the public latent-space operations.

The generator has two halves: a mapping network (Z -> W) and a synthesis
network driven by one W row per layer (W+). Layer count follows
2 * (log2(resolution) - 1): 6 at 16px, 10 at 64px, 18 at 1024px.

Determinism contract: the public ops here (map_latent, truncate, synthesize,
broadcast_w, mix_codes, sample_z) are bit-reproducible for identical inputs.
CPU matmul is not row-consistent across batch sizes, so the public paths run
one row / one sample at a time; training code uses the batched internals
(forward_z, synthesize_batch), which carry no bit-exactness promise.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import torch
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import CheckpointError, InvalidCodeError, InvalidParameterError
from .latent import LatentCode, Space
from .networks import EqualLinear, ModulatedConv2d, PixelNorm, StyledConv, ToRGB, channel_map

ROLES = ("pretrained", "unconstrained_finetuned", "constrained_finetuned")


@dataclass(frozen=True)
class GeneratorConfig:
    resolution: int
    latent_dim: int = 512
    channel_base: int = 128
    mapping_layers: int = 4
    w_mean_seed: int = 1234
    w_mean_count: int = 10000

    def __post_init__(self) -> None:
        r = self.resolution
        if r < 16 or (r & (r - 1)) != 0:
            raise InvalidParameterError(f"resolution must be a power of two >= 16, got {r}")
        if self.latent_dim < 8:
            raise InvalidParameterError(f"latent_dim must be >= 8, got {self.latent_dim}")
        if self.mapping_layers < 1:
            raise InvalidParameterError("mapping_layers must be >= 1")

    @property
    def layer_count(self) -> int:
        return 2 * (int(math.log2(self.resolution)) - 1)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict[str, Any]) -> "GeneratorConfig":
        return GeneratorConfig(**d)


class MappingNetwork(nn.Module):
    def __init__(self, config: GeneratorConfig, rng: torch.Generator):
        super().__init__()
        self.norm = PixelNorm()
        self.layers = nn.ModuleList(
            EqualLinear(config.latent_dim, config.latent_dim, rng, lr_mul=0.01, activate=True)
            for _ in range(config.mapping_layers)
        )

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = self.norm(z)
        for layer in self.layers:
            x = layer(x)
        return x


class SynthesisNetwork(nn.Module):
    """Per-layer styled synthesis from a (B, L, dim) style stack."""

    def __init__(self, config: GeneratorConfig, rng: torch.Generator):
        super().__init__()
        chans = channel_map(config.resolution, config.channel_base)
        d = config.latent_dim
        self.resolution = config.resolution
        self.layer_count = config.layer_count
        self.const = nn.Parameter(torch.randn(1, chans[4], 4, 4, generator=rng))
        self.conv1 = StyledConv(chans[4], chans[4], d, 4, rng)
        self.to_rgb1 = ToRGB(chans[4], d, rng)
        self.up_convs = nn.ModuleList()
        self.convs = nn.ModuleList()
        self.to_rgbs = nn.ModuleList()
        res = 8
        while res <= config.resolution:
            self.up_convs.append(StyledConv(chans[res // 2], chans[res], d, res, rng, upsample=True))
            self.convs.append(StyledConv(chans[res], chans[res], d, res, rng))
            self.to_rgbs.append(ToRGB(chans[res], d, rng))
            res *= 2

    def forward(self, styles: torch.Tensor) -> torch.Tensor:
        b = styles.shape[0]
        out = self.const.expand(b, -1, -1, -1)
        out = self.conv1(out, styles[:, 0])
        skip = self.to_rgb1(out, styles[:, 1])
        i = 1
        for up, conv, to_rgb in zip(self.up_convs, self.convs, self.to_rgbs):
            out = up(out, styles[:, i])
            out = conv(out, styles[:, i + 1])
            skip = to_rgb(out, styles[:, i + 2], skip)
            i += 2
        return torch.tanh(skip)


class Generator(nn.Module):
    """Mapping + synthesis + a role tag tracking the training stage.

    role is one of "pretrained", "unconstrained_finetuned",
    "constrained_finetuned". Stage entry points check it so, e.g., the pair
    builder refuses a generator that never went through unconstrained
    fine-tuning.
    """

    def __init__(self, config: GeneratorConfig, seed: int = 0, role: str = "pretrained"):
        super().__init__()
        if role not in ROLES:
            raise InvalidParameterError(f"unknown role {role!r}, expected one of {ROLES}")
        rng = torch.Generator().manual_seed(seed)
        self.config = config
        self.role = role
        self.mapping = MappingNetwork(config, rng)
        self.synthesis = SynthesisNetwork(config, rng)
        self.register_buffer("w_mean", torch.zeros(1, config.latent_dim))
        self.register_buffer("w_mean_valid", torch.zeros(()))

    @property
    def layer_count(self) -> int:
        return self.config.layer_count

    def ensure_w_mean(self) -> torch.Tensor:
        """Mean of mapped W over w_mean_count samples; float64 accumulation.

        Cached in a buffer so checkpoints carry it; the seed/count that
        produced it live in the config and land in the manifest.
        """
        if self.w_mean_valid.item() == 0.0:
            rng = torch.Generator().manual_seed(self.config.w_mean_seed)
            total = torch.zeros(self.config.latent_dim, dtype=torch.float64)
            remaining = self.config.w_mean_count
            with torch.no_grad():
                while remaining > 0:
                    n = min(remaining, 1000)
                    z = torch.randn(n, self.config.latent_dim, generator=rng)
                    total += self.mapping(z).to(torch.float64).sum(dim=0)
                    remaining -= n
            mean = (total / self.config.w_mean_count).to(torch.float32)
            self.w_mean.copy_(mean.unsqueeze(0))
            self.w_mean_valid.fill_(1.0)
        return self.w_mean

    def invalidate_w_mean(self) -> None:
        """Call after mutating mapping parameters (training steps)."""
        self.w_mean_valid.fill_(0.0)

    # Batched internals for training loops. No bit-exactness contract.

    def forward_z(self, z: torch.Tensor, truncation_psi: float = 1.0) -> torch.Tensor:
        w = self.mapping(z)
        if truncation_psi != 1.0:
            wm = self.ensure_w_mean()
            w = (1.0 - truncation_psi) * wm + truncation_psi * w
        styles = w.unsqueeze(1).expand(-1, self.layer_count, -1)
        return self.synthesis(styles)

    def synthesize_batch(self, styles: torch.Tensor) -> torch.Tensor:
        return self.synthesis(styles)


# --- public latent ops ---


def _require_dim(code: LatentCode, gen: Generator) -> None:
    if code.dim != gen.config.latent_dim:
        raise InvalidCodeError(
            f"code dim {code.dim} does not match generator latent_dim {gen.config.latent_dim}"
        )


def map_latent(code: LatentCode, gen: Generator) -> LatentCode:
    """Z -> W or Z+ -> W+ through the mapping network, row by row."""
    code.require_space(Space.Z, Space.ZPLUS)
    _require_dim(code, gen)
    if code.space == Space.ZPLUS:
        code.require_rows(gen.layer_count)
    with torch.no_grad():
        rows = [gen.mapping(code.values[i : i + 1]) for i in range(code.rows)]
    out = torch.cat(rows, dim=0)
    return LatentCode(Space.W if code.space == Space.Z else Space.WPLUS, out)


def truncate(code: LatentCode, psi: float, gen: Generator) -> LatentCode:
    """Pull W/W+ rows toward the mapping mean: (1 - psi) * w_mean + psi * w.

    The lerp form is exact at both endpoints: psi=1 returns the input bits,
    psi=0 returns w_mean bits.
    """
    code.require_space(Space.W, Space.WPLUS)
    _require_dim(code, gen)
    if not (0.0 <= psi <= 1.0):
        raise InvalidParameterError(f"psi must be in [0, 1], got {psi}")
    wm = gen.ensure_w_mean()
    with torch.no_grad():
        out = (1.0 - psi) * wm + psi * code.values
    return LatentCode(code.space, out)


def broadcast_w(code: LatentCode, layer_count: int) -> LatentCode:
    """Repeat a single W row into a W+ stack."""
    code.require_space(Space.W)
    if layer_count < 2:
        raise InvalidParameterError(f"layer_count must be >= 2, got {layer_count}")
    return LatentCode(Space.WPLUS, code.values.expand(layer_count, -1).clone())


def mix_codes(content: LatentCode, tail: LatentCode, k: int) -> LatentCode:
    """Rows [0, k) from content, rows [k, L) from tail. k in [0, L]."""
    content.require_space(Space.WPLUS)
    tail.require_space(Space.WPLUS)
    if content.values.shape != tail.values.shape:
        raise InvalidCodeError(
            f"mix operands must match: {tuple(content.values.shape)} vs {tuple(tail.values.shape)}"
        )
    if not isinstance(k, int) or not (0 <= k <= content.rows):
        raise InvalidParameterError(f"k must be an integer in [0, {content.rows}], got {k}")
    out = torch.cat([content.values[:k], tail.values[k:]], dim=0)
    return LatentCode(Space.WPLUS, out)


def synthesize(code: LatentCode, gen: Generator) -> torch.Tensor:
    """Decode a W or W+ code to a (3, R, R) image in [-1, 1].

    A W code is broadcast to all layers first. Output noise is a frozen
    buffer, so identical codes give identical images.
    """
    code.require_space(Space.W, Space.WPLUS)
    _require_dim(code, gen)
    if code.space == Space.W:
        code = broadcast_w(code, gen.layer_count)
    code.require_rows(gen.layer_count)
    img = gen.synthesis(code.values.unsqueeze(0))
    return img[0]


def sample_z(count: int, seed: int, space: Space, gen: Generator) -> list[LatentCode]:
    """Draw standard-normal codes in Z or Z+ from a dedicated seeded stream."""
    if space not in (Space.Z, Space.ZPLUS):
        raise InvalidParameterError(f"can only sample Z or ZPlus, got {space.value}")
    if count < 1:
        raise InvalidParameterError(f"count must be >= 1, got {count}")
    rows = 1 if space == Space.Z else gen.layer_count
    rng = torch.Generator().manual_seed(seed)
    return [
        LatentCode(space, torch.randn(rows, gen.config.latent_dim, generator=rng))
        for _ in range(count)
    ]


def save_generator(gen: Generator, path: str | Path) -> str:
    gen.ensure_w_mean()
    return save_checkpoint(
        path, "generator", gen.state_dict(), gen.config.to_dict(), {"role": gen.role}
    )


def load_generator(path: str | Path) -> Generator:
    ckpt = load_checkpoint(path, expected_kind="generator")
    role = ckpt.extra.get("role")
    if role not in ROLES:
        raise CheckpointError(f"{path}: generator checkpoint has invalid role {role!r}")
    gen = Generator(GeneratorConfig.from_dict(ckpt.config), seed=0, role=role)
    try:
        gen.load_state_dict(ckpt.tensors, strict=True)
    except RuntimeError as exc:
        raise CheckpointError(f"{path}: state does not fit the declared config: {exc}") from exc
    return gen
