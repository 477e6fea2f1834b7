"""Stylization pipelines: general, multimodal, reference-guided.

All three share one spine: encode the portrait to a content code, truncate
toward the style's mean W, synthesize under the fine-tuned generator. The
variants differ only in the tail rows mixed in above layer k:

    general     no tail (equivalently: k = layer_count)
    multimodal  tail from a seeded Z+ draw mapped through the generator
    reference   tail from a cached reference embedding, broadcast to W+

Truncation applies to content and tail alike, before mixing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

from .encoder import Encoder, encode
from .errors import ConfigError, InvalidParameterError
from .generator import Generator, broadcast_w, map_latent, mix_codes, sample_z, synthesize, truncate
from .images import validate_image
from .inversion import ReferenceEmbedding, broadcast_reference
from .latent import LatentCode, Space

# full-scale mixing anchors (out of 18 layers); desk defaults scale these
NOISE_MIX_ANCHORS_18 = (6, 9, 12)
REFERENCE_MIX_ANCHORS_18 = (3, 6, 9)


def proportional_mix_indices(layer_count: int, anchors: tuple[int, ...]) -> list[int]:
    """Scale 18-layer mixing indices to another layer count."""
    return [round(a * layer_count / 18) for a in anchors]


@dataclass
class StylePolicy:
    """Per-style serving defaults: which generator, how much truncation,
    which mix depths to offer."""

    style_id: str
    truncation_psi: float
    generator_path: str
    default_mix_indices: list[int] = field(default_factory=list)
    pair_level: int = 2

    def __post_init__(self) -> None:
        if not (0.0 <= self.truncation_psi <= 1.0):
            raise ConfigError(f"truncation_psi must be in [0, 1], got {self.truncation_psi}")
        if not self.style_id:
            raise ConfigError("style_id must be non-empty")


@dataclass
class MixSpec:
    """One mixing request: where to cut and what fills the tail."""

    k: int
    tail_source: str  # "noise" | "reference"
    truncation_psi: float
    seed: int | None = None
    reference_id: str | None = None

    def __post_init__(self) -> None:
        if self.tail_source not in ("noise", "reference"):
            raise InvalidParameterError(
                f"tail_source must be 'noise' or 'reference', got {self.tail_source!r}"
            )
        if not isinstance(self.k, int) or self.k < 0:
            raise InvalidParameterError(f"k must be a non-negative integer, got {self.k!r}")
        if not (0.0 <= self.truncation_psi <= 1.0):
            raise InvalidParameterError(f"psi must be in [0, 1], got {self.truncation_psi}")
        if self.tail_source == "noise" and self.seed is None:
            raise InvalidParameterError("noise mixing needs a seed")
        if self.tail_source == "reference" and not self.reference_id:
            raise InvalidParameterError("reference mixing needs a reference_id")


def content_code(image: torch.Tensor, enc: Encoder, gen: Generator, psi: float) -> LatentCode:
    """Portrait -> truncated W+ content stack under the style generator.

    The default encoder targets W; W+ and Z+ encoders plug in unchanged for
    the embedding-space study.
    """
    validate_image(image, gen.config.resolution)
    code = encode(image, enc)
    if code.space == Space.W:
        wplus = broadcast_w(code, gen.layer_count)
    elif code.space == Space.WPLUS:
        wplus = code
    else:
        wplus = map_latent(code, gen)
    return truncate(wplus, psi, gen)


def noise_tail(gen: Generator, seed: int, psi: float) -> LatentCode:
    """Seeded Z+ draw -> per-layer W rows -> truncated tail."""
    z = sample_z(1, seed, Space.ZPLUS, gen)[0]
    return truncate(map_latent(z, gen), psi, gen)


def reference_tail(emb: ReferenceEmbedding, gen: Generator, psi: float) -> LatentCode:
    return truncate(broadcast_reference(emb, gen), psi, gen)


def stylize_general(image: torch.Tensor, enc: Encoder, gen: Generator, psi: float) -> torch.Tensor:
    with torch.no_grad():
        return synthesize(content_code(image, enc, gen, psi), gen).detach()


def stylize_mixed(
    image: torch.Tensor, enc: Encoder, gen: Generator, tail: LatentCode, k: int, psi: float
) -> torch.Tensor:
    """Mix content rows [0, k) with tail rows [k, L). k = L reproduces
    stylize_general pixel for pixel."""
    content = content_code(image, enc, gen, psi)
    with torch.no_grad():
        return synthesize(mix_codes(content, tail, k), gen).detach()


def apply_mix(
    image: torch.Tensor,
    enc: Encoder,
    gen: Generator,
    spec: MixSpec,
    reference: ReferenceEmbedding | None = None,
) -> torch.Tensor:
    if spec.k > gen.layer_count:
        raise InvalidParameterError(
            f"k={spec.k} exceeds the generator's {gen.layer_count} layers"
        )
    if spec.tail_source == "noise":
        tail = noise_tail(gen, spec.seed, spec.truncation_psi)
    else:
        if reference is None:
            raise InvalidParameterError("reference mixing needs a resolved reference embedding")
        tail = reference_tail(reference, gen, spec.truncation_psi)
    return stylize_mixed(image, enc, gen, tail, spec.k, spec.truncation_psi)


def stylize_multimodal(
    image: torch.Tensor,
    enc: Encoder,
    gen: Generator,
    psi: float,
    k: int,
    seeds: list[int],
) -> list[torch.Tensor]:
    """One output per seed; variation lives in the tail rows only."""
    if not seeds:
        raise InvalidParameterError("need at least one seed")
    content = content_code(image, enc, gen, psi)
    if not (0 <= k <= gen.layer_count):
        raise InvalidParameterError(f"k must be in [0, {gen.layer_count}], got {k}")
    outs = []
    with torch.no_grad():
        for seed in seeds:
            tail = noise_tail(gen, seed, psi)
            outs.append(synthesize(mix_codes(content, tail, k), gen).detach())
    return outs
