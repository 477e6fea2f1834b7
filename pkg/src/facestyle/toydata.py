"""Procedural portrait sprites and deterministic style transforms.

No real face data ships with the repo; training, tests, and demos run on
sprites rendered here. Each sprite is parameterized (face shape, skin tone,
hair, eyes, mouth, background) so a corpus has enough identity variation for
drift to be measurable. Style sets are content sprites from an independent
seed pushed through a deterministic pixel transform, which keeps the style
domain visually coherent without any pairing to the content set.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy.special import expit

from .errors import InvalidParameterError
from .images import save_png


@dataclass
class PortraitParams:
    bg: np.ndarray
    skin: np.ndarray
    hair: np.ndarray
    eye: np.ndarray
    mouth: np.ndarray
    head_ax: float
    head_ay: float
    head_cy: float
    hair_scale: float
    hair_cut: float
    eye_dx: float
    eye_dy: float
    eye_r: float
    mouth_w: float
    mouth_h: float
    mouth_dy: float


def _hsv(rng: np.random.Generator, h_lo, h_hi, s_lo, s_hi, v_lo, v_hi) -> np.ndarray:
    h = float(rng.uniform(h_lo, h_hi)) % 1.0
    s = rng.uniform(s_lo, s_hi)
    v = rng.uniform(v_lo, v_hi)
    return np.array(colorsys.hsv_to_rgb(h, s, v), dtype=np.float64)


def sample_portrait_params(rng: np.random.Generator) -> PortraitParams:
    return PortraitParams(
        bg=_hsv(rng, 0.0, 1.0, 0.15, 0.5, 0.45, 0.9),
        skin=_hsv(rng, 0.03, 0.13, 0.25, 0.6, 0.35, 0.95),
        hair=_hsv(rng, 0.0, 1.0, 0.2, 0.9, 0.1, 0.85),
        eye=_hsv(rng, 0.5, 0.75, 0.4, 0.9, 0.2, 0.6),
        mouth=_hsv(rng, 0.96, 1.02, 0.5, 0.9, 0.4, 0.8),
        head_ax=rng.uniform(0.42, 0.62),
        head_ay=rng.uniform(0.55, 0.75),
        head_cy=rng.uniform(-0.05, 0.1),
        hair_scale=rng.uniform(1.05, 1.3),
        hair_cut=rng.uniform(-0.35, -0.05),
        eye_dx=rng.uniform(0.14, 0.28),
        eye_dy=rng.uniform(-0.25, -0.08),
        eye_r=rng.uniform(0.045, 0.09),
        mouth_w=rng.uniform(0.1, 0.26),
        mouth_h=rng.uniform(0.03, 0.08),
        mouth_dy=rng.uniform(0.22, 0.42),
    )


def render_portrait(params: PortraitParams, resolution: int) -> torch.Tensor:
    """Draw one sprite as a (3, R, R) float tensor in [-1, 1]."""
    if resolution < 8:
        raise InvalidParameterError(f"resolution too small: {resolution}")
    axis = np.linspace(-1.0, 1.0, resolution)
    xx, yy = np.meshgrid(axis, axis)
    soft = 4.0 / resolution

    def blend(img, mask, color):
        return img * (1.0 - mask[..., None]) + mask[..., None] * color[None, None, :]

    def ellipse(cx, cy, ax, ay):
        d = ((xx - cx) / ax) ** 2 + ((yy - cy) / ay) ** 2
        return expit((1.0 - d) / soft)

    img = np.ones((resolution, resolution, 3)) * params.bg[None, None, :]
    hair = ellipse(0.0, params.head_cy - 0.08, params.head_ax * params.hair_scale,
                   params.head_ay * params.hair_scale)
    img = blend(img, hair, params.hair)
    head = ellipse(0.0, params.head_cy, params.head_ax, params.head_ay)
    # hair stays visible above the cut line, face covers the rest
    face = head * expit((yy - params.head_cy - params.hair_cut) / soft)
    img = blend(img, face, params.skin)
    for side in (-1.0, 1.0):
        img = blend(img, ellipse(side * params.eye_dx, params.head_cy + params.eye_dy,
                                 params.eye_r, params.eye_r * 1.2), params.eye)
    img = blend(img, ellipse(0.0, params.head_cy + params.mouth_dy,
                             params.mouth_w, params.mouth_h), params.mouth)
    out = torch.from_numpy(np.transpose(img, (2, 0, 1))).to(torch.float32)
    return out.clamp(0.0, 1.0) * 2.0 - 1.0


def make_content_set(count: int, resolution: int, seed: int) -> torch.Tensor:
    """(N, 3, R, R) batch of sprites, deterministic in (count, resolution, seed)."""
    if count < 1:
        raise InvalidParameterError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    return torch.stack(
        [render_portrait(sample_portrait_params(rng), resolution) for _ in range(count)]
    )


# --- style transforms, pure functions on [-1, 1] images ---


def _edges(x01: np.ndarray) -> np.ndarray:
    gray = x01.mean(axis=0)
    gx = np.abs(np.diff(gray, axis=1, append=gray[:, -1:]))
    gy = np.abs(np.diff(gray, axis=0, append=gray[-1:, :]))
    return np.clip((gx + gy) * 4.0, 0.0, 1.0)


def stylize_cartoon(img: torch.Tensor) -> torch.Tensor:
    """Posterized colors, boosted saturation, dark edge lines."""
    x01 = (img.numpy().astype(np.float64) + 1.0) / 2.0
    poster = np.floor(x01 * 4.999) / 4.0
    mean = poster.mean(axis=0, keepdims=True)
    sat = np.clip(mean + 1.7 * (poster - mean), 0.0, 1.0)
    out = sat * (1.0 - 0.75 * _edges(x01)[None])
    return torch.from_numpy(out).to(torch.float32) * 2.0 - 1.0


def stylize_sketch(img: torch.Tensor) -> torch.Tensor:
    """Warm paper with dark strokes along edges."""
    x01 = (img.numpy().astype(np.float64) + 1.0) / 2.0
    strokes = np.clip(0.94 - 1.9 * _edges(x01), 0.0, 1.0)
    tint = np.array([1.0, 0.96, 0.88])
    out = strokes[None] * tint[:, None, None]
    return torch.from_numpy(out).to(torch.float32) * 2.0 - 1.0


STYLE_TRANSFORMS = {
    "cartoon": stylize_cartoon,
    "sketch": stylize_sketch,
}

# truncation defaults per style family: heavier truncation for the flatter,
# more regular looks, light truncation otherwise
STYLE_PSI = {
    "cartoon": 0.7,
    "sketch": 0.9,
}


def make_style_set(style: str, count: int, resolution: int, seed: int) -> torch.Tensor:
    if style not in STYLE_TRANSFORMS:
        raise InvalidParameterError(f"unknown style {style!r}, have {sorted(STYLE_TRANSFORMS)}")
    transform = STYLE_TRANSFORMS[style]
    base = make_content_set(count, resolution, seed)
    return torch.stack([transform(img) for img in base])


def write_image_dir(images: torch.Tensor, out_dir: str | Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, img in enumerate(images):
        p = out / f"img_{i:05d}.png"
        save_png(img, p)
        paths.append(p)
    return paths
