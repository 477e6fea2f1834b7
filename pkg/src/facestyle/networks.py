"""Building blocks: equalized-lr layers, modulated convs, discriminator.

All constructors take an explicit torch.Generator so a network built twice
from the same seed has identical parameters. Construction order is fixed,
nothing reads global RNG state.
"""

from __future__ import annotations

import math

import torch
from torch import nn
from torch.nn import functional as F


def channel_map(resolution: int, channel_base: int, channel_min: int = 8) -> dict[int, int]:
    """Channel width per feature-map resolution, halving as resolution doubles."""
    out = {}
    res = 4
    while res <= resolution:
        out[res] = max(channel_min, min(channel_base, channel_base * 4 // res))
        res *= 2
    return out


def leaky(x: torch.Tensor) -> torch.Tensor:
    # sqrt(2) gain keeps activation variance roughly unit through deep stacks
    return F.leaky_relu(x, 0.2) * math.sqrt(2.0)


class PixelNorm(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.rsqrt(x.pow(2).mean(dim=1, keepdim=True) + 1e-8)


class EqualLinear(nn.Module):
    """Linear layer with runtime weight scaling (equalized learning rate)."""

    def __init__(
        self,
        in_dim: int,
        out_dim: int,
        rng: torch.Generator,
        bias_init: float = 0.0,
        lr_mul: float = 1.0,
        activate: bool = False,
    ):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_dim, in_dim, generator=rng) / lr_mul)
        self.bias = nn.Parameter(torch.full((out_dim,), float(bias_init)))
        self.scale = lr_mul / math.sqrt(in_dim)
        self.lr_mul = lr_mul
        self.activate = activate

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = F.linear(x, self.weight * self.scale, self.bias * self.lr_mul)
        return leaky(out) if self.activate else out


class EqualConv2d(nn.Module):
    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        rng: torch.Generator,
        stride: int = 1,
        bias: bool = True,
    ):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(out_ch, in_ch, kernel, kernel, generator=rng))
        self.bias = nn.Parameter(torch.zeros(out_ch)) if bias else None
        self.scale = 1.0 / math.sqrt(in_ch * kernel * kernel)
        self.stride = stride
        self.padding = kernel // 2

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return F.conv2d(
            x, self.weight * self.scale, self.bias, stride=self.stride, padding=self.padding
        )


class ModulatedConv2d(nn.Module):
    """Style-modulated convolution with optional demodulation."""

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        kernel: int,
        style_dim: int,
        rng: torch.Generator,
        demodulate: bool = True,
    ):
        super().__init__()
        self.weight = nn.Parameter(torch.randn(1, out_ch, in_ch, kernel, kernel, generator=rng))
        self.modulation = EqualLinear(style_dim, in_ch, rng, bias_init=1.0)
        self.scale = 1.0 / math.sqrt(in_ch * kernel * kernel)
        self.demodulate = demodulate
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = kernel
        self.padding = kernel // 2

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        b, _, h, w = x.shape
        s = self.modulation(style).view(b, 1, self.in_ch, 1, 1)
        weight = self.scale * self.weight * s
        if self.demodulate:
            demod = torch.rsqrt(weight.pow(2).sum(dim=(2, 3, 4)) + 1e-8)
            weight = weight * demod.view(b, self.out_ch, 1, 1, 1)
        # grouped conv applies a distinct modulated kernel to each batch item
        weight = weight.view(b * self.out_ch, self.in_ch, self.kernel, self.kernel)
        out = F.conv2d(x.reshape(1, b * self.in_ch, h, w), weight, padding=self.padding, groups=b)
        return out.view(b, self.out_ch, h, w)


class StyledConv(nn.Module):
    """Modulated conv + frozen per-layer noise + bias + activation."""

    def __init__(
        self,
        in_ch: int,
        out_ch: int,
        style_dim: int,
        resolution: int,
        rng: torch.Generator,
        upsample: bool = False,
    ):
        super().__init__()
        self.upsample = upsample
        self.conv = ModulatedConv2d(in_ch, out_ch, 3, style_dim, rng)
        self.register_buffer("noise", torch.randn(1, 1, resolution, resolution, generator=rng))
        self.noise_strength = nn.Parameter(torch.zeros(()))
        self.bias = nn.Parameter(torch.zeros(out_ch))

    def forward(self, x: torch.Tensor, style: torch.Tensor) -> torch.Tensor:
        if self.upsample:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        out = self.conv(x, style)
        out = out + self.noise_strength * self.noise
        return leaky(out + self.bias.view(1, -1, 1, 1))


class ToRGB(nn.Module):
    def __init__(self, in_ch: int, style_dim: int, rng: torch.Generator, channels: int = 3):
        super().__init__()
        self.conv = ModulatedConv2d(in_ch, channels, 1, style_dim, rng, demodulate=False)
        self.bias = nn.Parameter(torch.zeros(channels))

    def forward(
        self, x: torch.Tensor, style: torch.Tensor, skip: torch.Tensor | None = None
    ) -> torch.Tensor:
        out = self.conv(x, style) + self.bias.view(1, -1, 1, 1)
        if skip is not None:
            out = out + F.interpolate(skip, scale_factor=2, mode="nearest")
        return out


class ConvLayer(nn.Module):
    """EqualConv2d + leaky relu, optionally downsampling by 2."""

    def __init__(
        self, in_ch: int, out_ch: int, kernel: int, rng: torch.Generator, down: bool = False
    ):
        super().__init__()
        self.conv = EqualConv2d(in_ch, out_ch, kernel, rng, stride=2 if down else 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return leaky(self.conv(x))


class Discriminator(nn.Module):
    def __init__(self, resolution: int, channel_base: int, rng: torch.Generator):
        super().__init__()
        chans = channel_map(resolution, channel_base, channel_min=16)
        self.resolution = resolution
        self.channel_base = channel_base
        layers: list[nn.Module] = [ConvLayer(3, chans[resolution], 1, rng)]
        res = resolution
        while res > 4:
            layers.append(ConvLayer(chans[res], chans[res], 3, rng))
            layers.append(ConvLayer(chans[res], chans[res // 2], 3, rng, down=True))
            res //= 2
        self.blocks = nn.Sequential(*layers)
        self.final_conv = ConvLayer(chans[4], chans[4], 3, rng)
        self.fc = EqualLinear(chans[4] * 16, chans[4], rng, activate=True)
        self.out = EqualLinear(chans[4], 1, rng)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        x = self.final_conv(self.blocks(img))
        return self.out(self.fc(x.flatten(1)))
