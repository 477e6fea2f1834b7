"""Multi-level pseudo-pair construction.

A pseudo pair couples a style image S with latent codes whose decode under
the pretrained generator looks like a real-domain counterpart of S. Three
levels, increasingly faithful:

    level 1  embed: S -> Z+ encoder -> z1; w1 = mapping(z1); P1 = G(w1)
    level 2  optimize: start from z1, minimize the semantic loss of the
             style-domain decode G*(z+) against S; decode the result under
             the pretrained G: w2 = mapping(z2), P2 = G(w2)
    level 3  refine: S -> W+ encoder -> w3; P3 = G(w3)

The level-2 objective runs through the unconstrained fine-tuned generator
G* (it can actually express S) while the stored w2/P2 are decoded by the
pretrained G, which is the whole point of the construction.

On disk, a dataset is <out_dir>/<sample_id>/ holding S.png, P1..P3.png,
z1/z2/w1/w2/w3 as raw little-endian float32 (.f32, row-major, shapes in
meta.json), plus a manifest.json whose hash covers every artifact byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import CheckpointError, ConfigError, InvalidImageError, NumericsError, RoleError
from .generator import Generator, map_latent, synthesize
from .images import image_hash, load_png, prepare_input, save_png
from .latent import LatentCode, Space
from .losses import FeatureNets, semantic_loss
from .encoder import Encoder, encode

log = logging.getLogger(__name__)

PAIR_LEVELS = (1, 2, 3)
SAMPLE_FILES = (
    "S.png", "P1.png", "P2.png", "P3.png",
    "z1.f32", "z2.f32", "w1.f32", "w2.f32", "w3.f32", "meta.json",
)


@dataclass
class PairGenConfig:
    iterations: int = 300
    lr: float = 0.02
    lambda_id: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.lambda_id < 0:
            raise ConfigError(f"lambda_id must be >= 0, got {self.lambda_id}")


@dataclass
class Level2Result:
    z2: LatentCode
    w2: LatentCode
    p2: torch.Tensor
    loss_initial: float
    loss_best: float
    curve: list[float]
    iterations_run: int


def embed_level1(style_image: torch.Tensor, enc_zplus: Encoder, gen: Generator):
    """(z1, w1, P1) per the embedding stage."""
    if enc_zplus.target_space != Space.ZPLUS:
        raise ConfigError("level 1 embedding needs a Z+ encoder")
    z1 = encode(style_image, enc_zplus)
    w1 = map_latent(z1, gen)
    with torch.no_grad():
        p1 = synthesize(w1, gen)
    return z1, w1, p1


def optimize_level2(
    style_image: torch.Tensor,
    z1: LatentCode,
    g_star: Generator,
    gen: Generator,
    cfg: PairGenConfig,
    nets: FeatureNets,
) -> Level2Result:
    """Best-iterate z+ optimization of the style-domain semantic loss.

    The loss at the initial point is evaluated before any update, and the
    returned code is the best iterate visited, so loss_best <= loss_initial
    holds exactly, not just in expectation.
    """
    if g_star.role != "unconstrained_finetuned":
        raise RoleError(
            f"level-2 optimization runs through an unconstrained fine-tuned generator, "
            f"got role {g_star.role!r}"
        )
    z1.require_space(Space.ZPLUS).require_rows(g_star.layer_count)
    g_star.requires_grad_(False)
    z = z1.values.detach().clone().requires_grad_(True)
    # beta1=0: no momentum, so a zero gradient leaves the iterate in place
    opt = torch.optim.Adam([z], lr=cfg.lr, betas=(0.0, 0.999))
    best_loss = math.inf
    best_z = z1.values.detach().clone()
    curve: list[float] = []
    for step in range(cfg.iterations):
        wp = g_star.mapping(z)
        img = g_star.synthesize_batch(wp.unsqueeze(0))[0]
        loss = semantic_loss(img, style_image, nets, cfg.lambda_id)
        value = float(loss.detach())
        if not math.isfinite(value):
            raise NumericsError(f"level-2 optimization diverged at step {step}")
        curve.append(value)
        if value < best_loss:
            best_loss = value
            best_z = z.detach().clone()
        opt.zero_grad()
        loss.backward()
        opt.step()
    z2 = LatentCode(Space.ZPLUS, best_z)
    w2 = map_latent(z2, gen)
    with torch.no_grad():
        p2 = synthesize(w2, gen)
    return Level2Result(z2, w2, p2, curve[0], best_loss, curve, cfg.iterations)


def refine_level3(style_image: torch.Tensor, enc_wplus: Encoder, gen: Generator):
    """(w3, P3) per the refinement stage."""
    if enc_wplus.target_space != Space.WPLUS:
        raise ConfigError("level 3 refinement needs a W+ encoder")
    w3 = encode(style_image, enc_wplus)
    with torch.no_grad():
        p3 = synthesize(w3, gen)
    return w3, p3


# --- disk format ---


def _write_f32(path: Path, values: torch.Tensor) -> None:
    path.write_bytes(np.ascontiguousarray(values.detach().numpy()).astype("<f4").tobytes())


def _read_f32(path: Path, shape: list[int]) -> torch.Tensor:
    raw = path.read_bytes()
    want = int(np.prod(shape)) * 4
    if len(raw) != want:
        raise CheckpointError(f"{path}: expected {want} bytes for shape {shape}, got {len(raw)}")
    return torch.from_numpy(np.frombuffer(raw, dtype="<f4").reshape(shape).copy())


@dataclass
class PairSample:
    sample_id: str
    style_image: torch.Tensor
    decodes: dict[int, torch.Tensor]
    z1: LatentCode
    z2: LatentCode
    w1: LatentCode
    w2: LatentCode
    w3: LatentCode
    meta: dict

    def code_for_level(self, level: int) -> LatentCode:
        if level not in PAIR_LEVELS:
            raise ConfigError(f"pair level must be one of {PAIR_LEVELS}, got {level}")
        return {1: self.w1, 2: self.w2, 3: self.w3}[level]


@dataclass
class PairDataset:
    root: Path
    style_name: str
    samples: list[PairSample]
    warnings: list[str] = field(default_factory=list)
    dataset_hash: str = ""

    def codes_for_level(self, level: int) -> list[LatentCode]:
        return [s.code_for_level(level) for s in self.samples]

    def style_images(self) -> torch.Tensor:
        return torch.stack([s.style_image for s in self.samples])


@dataclass
class BuildReport:
    built: int
    skipped_existing: int
    skipped_unreadable: int
    optimization_steps: int
    dataset_hash: str
    warnings: list[str]


def _sample_complete(sample_dir: Path) -> bool:
    return all((sample_dir / f).is_file() for f in SAMPLE_FILES)


def _hash_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def build_pair_dataset(
    style_dir: str | Path,
    gen: Generator,
    g_star: Generator,
    enc_zplus: Encoder,
    enc_wplus: Encoder,
    cfg: PairGenConfig,
    out_dir: str | Path,
    nets: FeatureNets,
    style_name: str = "style",
    gen_hash: str = "",
    gstar_hash: str = "",
) -> BuildReport:
    """Build (or resume) a pair dataset from a directory of style PNGs.

    Unreadable images are skipped with a warning. Samples whose directory is
    already complete are not recomputed, so a rerun over a finished dataset
    performs zero optimization steps. The manifest is rewritten at the end
    and its hash covers every artifact byte.
    """
    if gen.role != "pretrained":
        raise RoleError(f"pair decode generator must be pretrained, got role {gen.role!r}")
    if g_star.role != "unconstrained_finetuned":
        raise RoleError(
            f"pair optimization generator must be unconstrained_finetuned, "
            f"got role {g_star.role!r}"
        )
    style_dir = Path(style_dir)
    if not style_dir.is_dir():
        raise ConfigError(f"style image directory not found: {style_dir}")
    files = sorted(p for p in style_dir.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise ConfigError(f"no .png style images in {style_dir}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    resolution = gen.config.resolution

    warnings: list[str] = []
    built = skipped_existing = skipped_unreadable = steps = 0
    for path in files:
        try:
            raw = load_png(path)
        except InvalidImageError as exc:
            msg = f"skipped unreadable style image {path.name}: {exc}"
            log.warning("%s", msg)
            warnings.append(msg)
            skipped_unreadable += 1
            continue
        style_img = prepare_input(raw, resolution)
        sample_id = image_hash(style_img)[:16]
        sample_dir = out / sample_id
        if _sample_complete(sample_dir):
            skipped_existing += 1
            continue
        sample_dir.mkdir(parents=True, exist_ok=True)

        z1, w1, p1 = embed_level1(style_img, enc_zplus, gen)
        lvl2 = optimize_level2(style_img, z1, g_star, gen, cfg, nets)
        w3, p3 = refine_level3(style_img, enc_wplus, gen)
        steps += lvl2.iterations_run

        save_png(style_img, sample_dir / "S.png")
        save_png(p1, sample_dir / "P1.png")
        save_png(lvl2.p2, sample_dir / "P2.png")
        save_png(p3, sample_dir / "P3.png")
        codes = {"z1": z1, "z2": lvl2.z2, "w1": w1, "w2": lvl2.w2, "w3": w3}
        for name, code in codes.items():
            _write_f32(sample_dir / f"{name}.f32", code.values)
        meta = {
            "id": sample_id,
            "source": path.name,
            "image_shape": [3, resolution, resolution],
            "codes": {
                name: {"space": code.space.value, "shape": list(code.values.shape)}
                for name, code in codes.items()
            },
            "config": {
                "iterations": cfg.iterations,
                "lr": cfg.lr,
                "lambda_id": cfg.lambda_id,
                "seed": cfg.seed,
            },
            "generator_hash": gen_hash,
            "gstar_hash": gstar_hash,
            "extractor_id": nets.extractor_id,
            "loss_initial": lvl2.loss_initial,
            "loss_best": lvl2.loss_best,
        }
        (sample_dir / "meta.json").write_text(json.dumps(meta, sort_keys=True, indent=1))
        built += 1

    manifest = _write_manifest(out, style_name, warnings)
    return BuildReport(
        built, skipped_existing, skipped_unreadable, steps, manifest["dataset_hash"], warnings
    )


def _write_manifest(out: Path, style_name: str, warnings: list[str]) -> dict:
    sample_ids = sorted(p.name for p in out.iterdir() if p.is_dir())
    file_hashes: dict[str, str] = {}
    for sid in sample_ids:
        for fname in SAMPLE_FILES:
            file_hashes[f"{sid}/{fname}"] = _hash_file(out / sid / fname)
    dataset_hash = hashlib.sha256(
        json.dumps(file_hashes, sort_keys=True).encode("utf-8")
    ).hexdigest()
    manifest = {
        "style_name": style_name,
        "sample_ids": sample_ids,
        "files": file_hashes,
        "warnings": warnings,
        "dataset_hash": dataset_hash,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1))
    return manifest


def verify_pair_dataset(root: str | Path) -> dict:
    """Check every artifact against the manifest; raise on any mutation."""
    root = Path(root)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise CheckpointError(f"no manifest.json in {root}")
    manifest = json.loads(mpath.read_text())
    for rel, expected in manifest["files"].items():
        p = root / rel
        if not p.is_file():
            raise CheckpointError(f"pair dataset missing file {rel}")
        if _hash_file(p) != expected:
            raise CheckpointError(f"pair dataset file {rel} does not match its manifest hash")
    recomputed = hashlib.sha256(
        json.dumps(manifest["files"], sort_keys=True).encode("utf-8")
    ).hexdigest()
    if recomputed != manifest["dataset_hash"]:
        raise CheckpointError("pair dataset manifest hash mismatch")
    return manifest


def load_pair_dataset(root: str | Path) -> PairDataset:
    """Load a dataset, verifying artifact integrity first."""
    root = Path(root)
    manifest = verify_pair_dataset(root)
    samples = []
    for sid in manifest["sample_ids"]:
        sdir = root / sid
        meta = json.loads((sdir / "meta.json").read_text())
        codes = {
            name: LatentCode(Space(spec["space"]), _read_f32(sdir / f"{name}.f32", spec["shape"]))
            for name, spec in meta["codes"].items()
        }
        samples.append(
            PairSample(
                sample_id=sid,
                style_image=load_png(sdir / "S.png"),
                decodes={i: load_png(sdir / f"P{i}.png") for i in PAIR_LEVELS},
                z1=codes["z1"],
                z2=codes["z2"],
                w1=codes["w1"],
                w2=codes["w2"],
                w3=codes["w3"],
                meta=meta,
            )
        )
    return PairDataset(
        root=root,
        style_name=manifest["style_name"],
        samples=samples,
        warnings=list(manifest["warnings"]),
        dataset_hash=manifest["dataset_hash"],
    )
