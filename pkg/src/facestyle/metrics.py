"""Distribution and pairwise quality metrics.

fid() follows the standard Frechet form between Gaussian moment estimates.
The matrix square root is taken through eigendecompositions of symmetrized
products, which keeps the result symmetric in its arguments and lets us
count (and clamp) any negative eigenvalues that slip in numerically.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from .errors import MetricError
from .losses import FeatureNets, identity_loss, lpips
from .networks import ConvLayer, EqualLinear

log = logging.getLogger(__name__)

# relative eigenvalue tolerance: more negative than this triggers a warning
PSD_TOL = 1e-6


@dataclass
class FeatureSet:
    """Feature vectors (N, m) plus the id of the extractor that made them."""

    features: np.ndarray
    extractor_id: str

    def __post_init__(self) -> None:
        arr = np.asarray(self.features, dtype=np.float64)
        if arr.ndim != 2:
            raise MetricError(f"features must be (N, m), got shape {arr.shape}")
        if arr.shape[0] < 2:
            raise MetricError(f"need at least 2 samples for moments, got {arr.shape[0]}")
        if not np.isfinite(arr).all():
            raise MetricError("features contain non-finite values")
        self.features = arr


def _psd_sqrt(mat: np.ndarray) -> tuple[np.ndarray, int]:
    vals, vecs = np.linalg.eigh(mat)
    scale = max(1.0, float(np.abs(vals).max(initial=0.0)))
    clamped = int((vals < -PSD_TOL * scale).sum())
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T, clamped


def fid(a: FeatureSet, b: FeatureSet) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    if a.extractor_id != b.extractor_id:
        raise MetricError(
            f"feature sets come from different extractors: "
            f"{a.extractor_id!r} vs {b.extractor_id!r}"
        )
    if a.features.shape[1] != b.features.shape[1]:
        raise MetricError(
            f"feature dims differ: {a.features.shape[1]} vs {b.features.shape[1]}"
        )
    mu_a, mu_b = a.features.mean(axis=0), b.features.mean(axis=0)
    cov_a = np.cov(a.features, rowvar=False)
    cov_b = np.cov(b.features, rowvar=False)
    sqrt_a, clamp1 = _psd_sqrt(cov_a)
    cross, clamp2 = _psd_sqrt(sqrt_a @ cov_b @ sqrt_a)
    clamped = clamp1 + clamp2
    if clamped:
        log.warning("fid: clamped %d negative eigenvalues beyond tolerance", clamped)
    value = float(
        np.sum((mu_a - mu_b) ** 2) + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(cross)
    )
    return max(value, 0.0)


class FidExtractor(torch.nn.Module):
    """Fixed random conv net mapping images to pooled feature vectors."""

    def __init__(self, seed: int, feature_dim: int = 48):
        super().__init__()
        rng = torch.Generator().manual_seed(seed)
        self.stages = torch.nn.Sequential(
            ConvLayer(3, 16, 5, rng, down=True),
            ConvLayer(16, 32, 3, rng, down=True),
            ConvLayer(32, 64, 3, rng, down=True),
        )
        self.fc = EqualLinear(64, feature_dim, rng)
        self.extractor_id = f"fid-random-{seed}-{feature_dim}"
        self.eval()
        self.requires_grad_(False)

    def extract(self, images: torch.Tensor, batch: int = 16) -> FeatureSet:
        if images.dim() != 4 or images.shape[1] != 3:
            raise MetricError(f"expected (N, 3, H, W) images, got {tuple(images.shape)}")
        feats = []
        with torch.no_grad():
            for i in range(0, images.shape[0], batch):
                out = self.stages(images[i : i + batch])
                out = torch.nn.functional.adaptive_avg_pool2d(out, 1).flatten(1)
                feats.append(self.fc(out).to(torch.float64).numpy())
        return FeatureSet(np.concatenate(feats, axis=0), self.extractor_id)


def perceptual_distance(a: torch.Tensor, b: torch.Tensor, nets: FeatureNets) -> float:
    """Mean perceptual distance over aligned image pairs."""
    if a.shape != b.shape or a.dim() != 4:
        raise MetricError(f"need aligned (N, 3, H, W) batches, got {a.shape} vs {b.shape}")
    if a.shape[0] < 1:
        raise MetricError("empty image batch")
    with torch.no_grad():
        vals = [float(lpips(a[i], b[i], nets.perceptual)) for i in range(a.shape[0])]
    return float(np.mean(vals))


def identity_distance(a: torch.Tensor, b: torch.Tensor, nets: FeatureNets) -> float:
    """Mean identity-embedding distance (1 - cosine) over aligned pairs."""
    if a.shape != b.shape or a.dim() != 4:
        raise MetricError(f"need aligned (N, 3, H, W) batches, got {a.shape} vs {b.shape}")
    if a.shape[0] < 1:
        raise MetricError("empty image batch")
    with torch.no_grad():
        vals = [float(identity_loss(a[i], b[i], nets.identity)) for i in range(a.shape[0])]
    return float(np.mean(vals))


def semantic_distance(gen_a, gen_b, count: int, seed: int, nets: FeatureNets) -> float:
    """Mean perceptual distance between the two generators' outputs on shared z.

    The measurement of content drift: sample z once, decode under both
    generators, compare. Deterministic for fixed (count, seed, extractor).
    """
    if gen_a.config.resolution != gen_b.config.resolution:
        raise MetricError("generators have different resolutions")
    if gen_a.config.latent_dim != gen_b.config.latent_dim:
        raise MetricError("generators have different latent dims")
    if count < 1:
        raise MetricError(f"count must be >= 1, got {count}")
    rng = torch.Generator().manual_seed(seed)
    vals = []
    chunk = 8
    with torch.no_grad():
        remaining = count
        while remaining > 0:
            n = min(chunk, remaining)
            z = torch.randn(n, gen_a.config.latent_dim, generator=rng)
            img_a = gen_a.forward_z(z)
            img_b = gen_b.forward_z(z)
            vals.extend(float(lpips(img_a[i], img_b[i], nets.perceptual)) for i in range(n))
            remaining -= n
    return float(np.mean(vals))
