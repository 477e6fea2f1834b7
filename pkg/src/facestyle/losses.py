"""Training losses: perceptual distance, identity term, adversarial pair.

Both feature extractors run at a fixed 256x256 input resolution; images at
other sizes are resized first. At desk scale the extractors are fixed-seed
random conv nets (frozen, never trained); the same container format can load
learned extractor weights instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import nn

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import InvalidImageError, InvalidParameterError
from .networks import ConvLayer, EqualLinear

FEATURE_RESOLUTION = 256


def _as_batch(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 3:
        x = x.unsqueeze(0)
    if x.dim() != 4 or x.shape[1] != 3:
        raise InvalidImageError(f"expected (3, H, W) or (B, 3, H, W), got {tuple(x.shape)}")
    return x


def resize_to(x: torch.Tensor, size: int) -> torch.Tensor:
    if x.shape[-1] == size and x.shape[-2] == size:
        return x
    return F.interpolate(x, size=(size, size), mode="bilinear", align_corners=False)


class PerceptualNet(nn.Module):
    """Small conv stack; distances are computed on its intermediate features."""

    def __init__(self, rng: torch.Generator):
        super().__init__()
        self.stages = nn.ModuleList(
            [
                ConvLayer(3, 12, 5, rng, down=True),  # 64
                ConvLayer(12, 24, 3, rng, down=True),  # 32
                ConvLayer(24, 48, 3, rng, down=True),  # 16
                ConvLayer(48, 96, 3, rng, down=True),  # 8
            ]
        )
        # cheap 2x pool up front keeps 256px inputs affordable on CPU
        self.pre = nn.AvgPool2d(2)
        # gain calibrated so clearly-different portraits land around 0.3-0.5
        self.register_buffer("layer_weights", torch.full((len(self.stages),), 2.5))

    def features(self, x: torch.Tensor) -> list[torch.Tensor]:
        feats = []
        out = self.pre(x)
        for stage in self.stages:
            out = stage(out)
            feats.append(out)
        return feats


class IdentityNet(nn.Module):
    """Maps a portrait to a unit-norm embedding; cosine measures identity."""

    def __init__(self, rng: torch.Generator, embed_dim: int = 64):
        super().__init__()
        self.stages = nn.Sequential(
            nn.AvgPool2d(2),
            ConvLayer(3, 16, 5, rng, down=True),  # 64
            ConvLayer(16, 32, 3, rng, down=True),  # 32
            ConvLayer(32, 48, 3, rng, down=True),  # 16
            ConvLayer(48, 64, 3, rng, down=True),  # 8
        )
        self.fc = EqualLinear(64, embed_dim, rng)

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        x = resize_to(_as_batch(x), FEATURE_RESOLUTION)
        out = self.stages(x)
        out = F.adaptive_avg_pool2d(out, 1).flatten(1)
        return F.normalize(self.fc(out), dim=1)


@dataclass
class FeatureNets:
    perceptual: PerceptualNet
    identity: IdentityNet
    extractor_id: str


def default_feature_nets(seed: int) -> FeatureNets:
    rng = torch.Generator().manual_seed(seed)
    percep = PerceptualNet(rng)
    ident = IdentityNet(rng)
    for net in (percep, ident):
        net.eval()
        net.requires_grad_(False)
    return FeatureNets(percep, ident, extractor_id=f"random-{seed}")


def save_feature_nets(nets: FeatureNets, path: str | Path) -> str:
    state = {}
    for prefix, net in (("perceptual", nets.perceptual), ("identity", nets.identity)):
        for name, value in net.state_dict().items():
            state[f"{prefix}.{name}"] = value
    return save_checkpoint(path, "features", state, {}, {"extractor_id": nets.extractor_id})


def load_feature_nets(path: str | Path) -> FeatureNets:
    ckpt = load_checkpoint(path, expected_kind="features")
    nets = default_feature_nets(seed=0)
    nets.perceptual.load_state_dict(
        {k[len("perceptual.") :]: v for k, v in ckpt.tensors.items() if k.startswith("perceptual.")}
    )
    nets.identity.load_state_dict(
        {k[len("identity.") :]: v for k, v in ckpt.tensors.items() if k.startswith("identity.")}
    )
    return FeatureNets(nets.perceptual, nets.identity, ckpt.extra["extractor_id"])


def lpips(a: torch.Tensor, b: torch.Tensor, net: PerceptualNet) -> torch.Tensor:
    """Weighted feature-space distance, zero iff inputs match, symmetric.

    Features are unit-normalized along channels before the squared
    difference, then averaged per layer and combined with the net's layer
    weights. Returns a scalar (batch mean).
    """
    a, b = _as_batch(a), _as_batch(b)
    if a.shape != b.shape:
        raise InvalidImageError(f"image shapes differ: {tuple(a.shape)} vs {tuple(b.shape)}")
    a = resize_to(a, FEATURE_RESOLUTION)
    b = resize_to(b, FEATURE_RESOLUTION)
    total = torch.zeros((), dtype=a.dtype)
    for weight, fa, fb in zip(net.layer_weights, net.features(a), net.features(b)):
        na = fa * torch.rsqrt(fa.pow(2).sum(dim=1, keepdim=True) + 1e-10)
        nb = fb * torch.rsqrt(fb.pow(2).sum(dim=1, keepdim=True) + 1e-10)
        total = total + weight * (na - nb).pow(2).mean()
    return total


def identity_loss(a: torch.Tensor, b: torch.Tensor, net: IdentityNet) -> torch.Tensor:
    """1 - cosine similarity of identity embeddings, in [0, 2]."""
    ea, eb = net.embed(a), net.embed(b)
    return (1.0 - (ea * eb).sum(dim=1)).clamp(0.0, 2.0).mean()


def semantic_loss(
    a: torch.Tensor, b: torch.Tensor, nets: FeatureNets, lambda_id: float = 0.1
) -> torch.Tensor:
    """Perceptual + lambda_id * identity. The content-preservation objective."""
    if lambda_id < 0:
        raise InvalidParameterError(f"lambda_id must be >= 0, got {lambda_id}")
    return lpips(a, b, nets.perceptual) + lambda_id * identity_loss(a, b, nets.identity)


def paired_loss(generated: torch.Tensor, style_target: torch.Tensor, nets: FeatureNets) -> torch.Tensor:
    """Perceptual-only distance between a decoded pair code and its style image.

    No identity term: the style target is already the stylized answer, the
    identity constraint lives in the semantic term.
    """
    return lpips(generated, style_target, nets.perceptual)


def adversarial_g_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    if fake_logits.numel() == 0:
        raise InvalidParameterError("empty logits batch")
    return F.softplus(-fake_logits).mean()


def adversarial_d_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    if real_logits.numel() == 0 or fake_logits.numel() == 0:
        raise InvalidParameterError("empty logits batch")
    return F.softplus(fake_logits).mean() + F.softplus(-real_logits).mean()


def r1_penalty(disc: nn.Module, real: torch.Tensor) -> torch.Tensor:
    """Gradient penalty on real images: mean squared gradient norm."""
    real = real.detach().requires_grad_(True)
    logits = disc(real)
    (grad,) = torch.autograd.grad(logits.sum(), real, create_graph=True)
    return grad.pow(2).sum(dim=(1, 2, 3)).mean()


def total_loss(
    adv: torch.Tensor,
    semantic: torch.Tensor,
    paired: torch.Tensor,
    lambda_semantic: float,
    lambda_paired: float,
) -> torch.Tensor:
    if lambda_semantic < 0 or lambda_paired < 0:
        raise InvalidParameterError("loss weights must be >= 0")
    return adv + lambda_semantic * semantic + lambda_paired * paired
