"""Latent inversion: closed-form factor basis, per-space optimization, cache.

The factor basis comes from the generator's style-modulation weights: stack
every per-layer affine (style -> channel scales) into one matrix and take
its top right-singular directions. Columns are orthonormal; V-space codes
are coefficients over these directions around the mean W anchor:

    w = anchor + v @ basis^T

Reference embeddings invert a style image into V under the style generator,
store both v and the decoded w, and live in a content-addressed cache at
<cache_root>/<style_id>/<image_hash>/.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .errors import ConfigError, InvalidParameterError, NumericsError
from .generator import Generator, broadcast_w
from .images import image_hash, validate_image
from .latent import LatentCode, Space
from .losses import FeatureNets, semantic_loss
from .networks import ModulatedConv2d

log = logging.getLogger(__name__)


@dataclass
class SefaBasis:
    basis: torch.Tensor   # (latent_dim, k), orthonormal columns
    anchor: torch.Tensor  # (1, latent_dim)

    @property
    def k(self) -> int:
        return int(self.basis.shape[1])


def sefa_basis(gen: Generator, k: int = 64) -> SefaBasis:
    """Top-k right singular directions of the stacked style-affine weights."""
    d = gen.config.latent_dim
    if not (1 <= k <= d):
        raise InvalidParameterError(f"k must be in [1, {d}], got {k}")
    mats = []
    for mod in gen.synthesis.modules():
        if isinstance(mod, ModulatedConv2d):
            # detach: the basis is a frozen snapshot, not part of any graph
            mats.append(mod.modulation.weight.detach() * mod.modulation.scale)
    stacked = torch.cat(mats, dim=0)
    _, _, vh = torch.linalg.svd(stacked, full_matrices=False)
    return SefaBasis(basis=vh[:k].T.contiguous(), anchor=gen.ensure_w_mean().clone())


def decode_v(v_code: LatentCode, basis: SefaBasis) -> LatentCode:
    """V coefficients -> W. The stored and recomputed w must agree bitwise,
    so every caller goes through this one expression."""
    v_code.require_space(Space.V)
    if v_code.dim != basis.k:
        raise InvalidParameterError(f"v code has dim {v_code.dim}, basis has k={basis.k}")
    return LatentCode(Space.W, basis.anchor + v_code.values @ basis.basis.T)


@dataclass
class InversionResult:
    code: LatentCode
    recon: torch.Tensor
    loss_initial: float
    loss_best: float
    curve: list[float]
    iterations_run: int


INVERTIBLE_SPACES = (Space.ZPLUS, Space.W, Space.WPLUS, Space.V)


def invert(
    image: torch.Tensor,
    gen: Generator,
    space: Space,
    nets: FeatureNets,
    iterations: int = 1000,
    lr: float = 0.02,
    lambda_id: float = 0.1,
    basis: SefaBasis | None = None,
    k: int = 64,
    on_step=None,
) -> InversionResult:
    """Optimize a code in the chosen space to reconstruct the image.

    Initialization is fixed per space (zeros for Z+/V, mean W for W/W+), the
    objective is the semantic loss, and the best iterate wins, so the final
    loss never exceeds the initial one.
    """
    validate_image(image, gen.config.resolution)
    if space not in INVERTIBLE_SPACES:
        raise InvalidParameterError(f"cannot invert into {space.value}")
    if iterations < 1 or lr <= 0:
        raise InvalidParameterError("iterations must be >= 1 and lr > 0")
    d = gen.config.latent_dim
    layers = gen.layer_count
    gen.requires_grad_(False)
    if space == Space.V and basis is None:
        basis = sefa_basis(gen, k)

    if space == Space.ZPLUS:
        init = torch.zeros(layers, d)
    elif space == Space.W:
        init = gen.ensure_w_mean().clone()
    elif space == Space.WPLUS:
        init = gen.ensure_w_mean().expand(layers, -1).clone()
    else:
        init = torch.zeros(1, basis.k)

    param = init.clone().requires_grad_(True)

    def decode(values: torch.Tensor) -> torch.Tensor:
        if space == Space.ZPLUS:
            styles = gen.mapping(values).unsqueeze(0)
        elif space == Space.W:
            styles = values.expand(layers, -1).unsqueeze(0)
        elif space == Space.WPLUS:
            styles = values.unsqueeze(0)
        else:
            w = basis.anchor + values @ basis.basis.T
            styles = w.expand(layers, -1).unsqueeze(0)
        return gen.synthesize_batch(styles)[0]

    opt = torch.optim.Adam([param], lr=lr, betas=(0.0, 0.999))
    best_loss = math.inf
    best = init.clone()
    curve: list[float] = []
    for step in range(iterations):
        loss = semantic_loss(decode(param), image, nets, lambda_id)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NumericsError(f"inversion diverged at step {step}")
        curve.append(value)
        if value < best_loss:
            best_loss = value
            best = param.detach().clone()
        opt.zero_grad()
        loss.backward()
        opt.step()
        if on_step is not None:
            on_step(step, value)
    code = LatentCode(space, best)
    with torch.no_grad():
        recon = decode(best)
    return InversionResult(code, recon, curve[0], best_loss, curve, iterations)


# --- reference embeddings ---


@dataclass
class ReferenceEmbedding:
    style_id: str
    image_hash: str
    v_code: LatentCode
    w_code: LatentCode
    meta: dict

    @property
    def reference_id(self) -> str:
        return f"{self.style_id}/{self.image_hash}"


def _read_f32(path: Path, shape: list[int]) -> torch.Tensor:
    raw = path.read_bytes()
    want = int(np.prod(shape)) * 4
    if len(raw) != want:
        raise ConfigError(f"{path}: expected {want} bytes, got {len(raw)}")
    return torch.from_numpy(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())


class ReferenceCache:
    """Embeddings cached under <root>/<style_id>/<image_hash>/."""

    def __init__(self, root: str | Path):
        self.root = Path(root)

    def entry_dir(self, style_id: str, img_hash: str) -> Path:
        return self.root / style_id / img_hash

    def get(self, style_id: str, img_hash: str) -> ReferenceEmbedding | None:
        """Return the cached embedding, or None (with a log line) if the
        entry is absent or fails validation; a damaged entry is a miss,
        never an exception."""
        d = self.entry_dir(style_id, img_hash)
        if not d.is_dir():
            return None
        try:
            meta = json.loads((d / "meta.json").read_text())
            v = _read_f32(d / "v.f32", meta["v_shape"])
            w = _read_f32(d / "w.f32", meta["w_shape"])
            if meta["style_id"] != style_id or meta["image_hash"] != img_hash:
                raise ConfigError("cache entry metadata does not match its location")
            return ReferenceEmbedding(
                style_id=style_id,
                image_hash=img_hash,
                v_code=LatentCode(Space.V, v),
                w_code=LatentCode(Space.W, w),
                meta=meta,
            )
        except Exception as exc:  # noqa: BLE001 - any damage means a miss
            log.warning("reference cache entry %s is unusable (%s); treating as miss", d, exc)
            return None

    def put(self, emb: ReferenceEmbedding) -> Path:
        d = self.entry_dir(emb.style_id, emb.image_hash)
        d.mkdir(parents=True, exist_ok=True)
        (d / "v.f32").write_bytes(
            np.ascontiguousarray(emb.v_code.values.numpy()).astype("<f4").tobytes()
        )
        (d / "w.f32").write_bytes(
            np.ascontiguousarray(emb.w_code.values.numpy()).astype("<f4").tobytes()
        )
        meta = dict(emb.meta)
        meta.update(
            {
                "style_id": emb.style_id,
                "image_hash": emb.image_hash,
                "v_shape": list(emb.v_code.values.shape),
                "w_shape": list(emb.w_code.values.shape),
            }
        )
        (d / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
        return d

    def list_ids(self, style_id: str) -> list[str]:
        d = self.root / style_id
        if not d.is_dir():
            return []
        return sorted(p.name for p in d.iterdir() if p.is_dir())


def embed_reference(
    image: torch.Tensor,
    gen: Generator,
    style_id: str,
    cache: ReferenceCache,
    nets: FeatureNets,
    basis: SefaBasis | None = None,
    iterations: int = 1000,
    lr: float = 0.02,
    k: int = 64,
    gen_hash: str = "",
    on_step=None,
) -> tuple[ReferenceEmbedding, int]:
    """Invert a style reference into V (cached); returns (embedding, steps_run).

    A cache hit costs zero optimization steps.
    """
    h = image_hash(image)
    hit = cache.get(style_id, h)
    if hit is not None:
        return hit, 0
    if basis is None:
        basis = sefa_basis(gen, k)
    result = invert(
        image, gen, Space.V, nets, iterations=iterations, lr=lr, basis=basis, on_step=on_step
    )
    w_code = decode_v(result.code, basis)
    emb = ReferenceEmbedding(
        style_id=style_id,
        image_hash=h,
        v_code=result.code,
        w_code=w_code,
        meta={
            "iterations": iterations,
            "lr": lr,
            "k": basis.k,
            "loss_initial": result.loss_initial,
            "loss_best": result.loss_best,
            "generator_hash": gen_hash,
            "extractor_id": nets.extractor_id,
        },
    )
    cache.put(emb)
    return emb, result.iterations_run


def broadcast_reference(emb: ReferenceEmbedding, gen: Generator) -> LatentCode:
    """Reference W code as a W+ stack ready for mixing."""
    return broadcast_w(emb.w_code, gen.layer_count)
