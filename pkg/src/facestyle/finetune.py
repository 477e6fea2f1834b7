"""Adversarial fine-tuning of the generator toward a style domain.

The constrained objective per generator step is

    total = adv + lambda_semantic * semantic + lambda_paired * paired

where the semantic term compares G'(z) against the frozen pretrained G(z)
on a fresh shared z batch, and the paired term compares G'(w+) against the
style image of a stored pseudo pair. Setting both lambdas to zero gives the
plain unconstrained fine-tune (role "unconstrained_finetuned"); anything
else produces a "constrained_finetuned" generator.

Runs are reproducible: all randomness flows from the config seed, logs and
checkpoints contain no timestamps, and identical (config, seed, inputs)
produce byte-identical checkpoint files.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import torch

from .errors import ConfigError, NumericsError
from .generator import Generator, GeneratorConfig, save_generator
from .checkpoint import load_checkpoint, save_checkpoint
from .losses import (
    FeatureNets,
    adversarial_d_loss,
    adversarial_g_loss,
    paired_loss,
    r1_penalty,
    semantic_loss,
)
from .networks import Discriminator
from .pseudo_pairs import PAIR_LEVELS, PairDataset

DEFAULT_R1_WEIGHT = 10.0
DEFAULT_R1_INTERVAL = 16


def save_discriminator(disc: Discriminator, path: str | Path) -> str:
    return save_checkpoint(
        path,
        "discriminator",
        disc.state_dict(),
        {"resolution": disc.resolution, "channel_base": disc.channel_base},
        {},
    )


def load_discriminator(path: str | Path) -> Discriminator:
    ckpt = load_checkpoint(path, expected_kind="discriminator")
    disc = Discriminator(
        ckpt.config["resolution"], ckpt.config["channel_base"], torch.Generator().manual_seed(0)
    )
    disc.load_state_dict(ckpt.tensors, strict=True)
    return disc


@dataclass
class FinetuneConfig:
    lambda_id: float = 0.1
    lambda_semantic: float = 1.0
    lambda_paired: float = 1.0
    lr: float = 0.02
    batch_size: int = 4
    iterations: int = 1000
    pair_level: int = 2
    seed: int = 0
    r1_weight: float = DEFAULT_R1_WEIGHT
    r1_interval: int = DEFAULT_R1_INTERVAL

    def __post_init__(self) -> None:
        if min(self.lambda_id, self.lambda_semantic, self.lambda_paired) < 0:
            raise ConfigError("loss weights must be >= 0")
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.pair_level not in PAIR_LEVELS:
            raise ConfigError(f"pair_level must be one of {PAIR_LEVELS}, got {self.pair_level}")
        if self.r1_weight < 0 or self.r1_interval < 1:
            raise ConfigError("r1_weight must be >= 0 and r1_interval >= 1")

    @property
    def role(self) -> str:
        if self.lambda_semantic == 0 and self.lambda_paired == 0:
            return "unconstrained_finetuned"
        return "constrained_finetuned"


@dataclass
class StepReport:
    step: int
    adv: float
    d_loss: float
    semantic: float
    paired: float
    total: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class FinetuneState:
    """Everything one training step needs; built once per run."""

    def __init__(
        self,
        g_prime: Generator,
        g_frozen: Generator,
        disc: Discriminator,
        cfg: FinetuneConfig,
        nets: FeatureNets,
        pair_codes: torch.Tensor | None,
        pair_targets: torch.Tensor | None,
    ):
        self.g_prime = g_prime
        self.g_frozen = g_frozen
        self.disc = disc
        self.cfg = cfg
        self.nets = nets
        self.pair_codes = pair_codes
        self.pair_targets = pair_targets
        self.opt_g = torch.optim.Adam(g_prime.parameters(), lr=cfg.lr, betas=(0.0, 0.99))
        self.opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(0.0, 0.99))
        self.rng = torch.Generator().manual_seed(cfg.seed)
        self.step = 0


def clone_generator(gen: Generator, role: str) -> Generator:
    """Bit-exact copy (parameters, noise buffers, w_mean) with a new role tag."""
    out = Generator(gen.config, seed=0, role=role)
    out.load_state_dict(gen.state_dict())
    return out


def init_finetune(
    gen: Generator,
    disc: Discriminator,
    cfg: FinetuneConfig,
    nets: FeatureNets,
    pairs: PairDataset | None,
) -> FinetuneState:
    if cfg.lambda_paired > 0:
        if pairs is None or not pairs.samples:
            raise ConfigError("lambda_paired > 0 requires a non-empty pair dataset")
        codes = pairs.codes_for_level(cfg.pair_level)
        pair_codes = torch.stack([c.values for c in codes])
        pair_targets = pairs.style_images()
    else:
        pair_codes = pair_targets = None
    gen.ensure_w_mean()
    g_prime = clone_generator(gen, cfg.role)
    gen.requires_grad_(False)
    return FinetuneState(g_prime, gen, disc, cfg, nets, pair_codes, pair_targets)


def finetune_step(state: FinetuneState, style_batch: torch.Tensor) -> StepReport:
    """One D update then one G' update on a fresh z batch."""
    cfg = state.cfg
    z = torch.randn(cfg.batch_size, state.g_prime.config.latent_dim, generator=state.rng)

    with torch.no_grad():
        fake_for_d = state.g_prime.forward_z(z)
    d_loss = adversarial_d_loss(state.disc(style_batch), state.disc(fake_for_d))
    if cfg.r1_weight > 0 and state.step % cfg.r1_interval == 0:
        d_loss = d_loss + 0.5 * cfg.r1_weight * r1_penalty(state.disc, style_batch)
    state.opt_d.zero_grad()
    d_loss.backward()
    state.opt_d.step()

    fake = state.g_prime.forward_z(z)
    adv = adversarial_g_loss(state.disc(fake))
    zero = torch.zeros(())
    semantic = zero
    if cfg.lambda_semantic > 0:
        with torch.no_grad():
            ref = state.g_frozen.forward_z(z)
        semantic = semantic_loss(fake, ref, state.nets, cfg.lambda_id)
    paired = zero
    if cfg.lambda_paired > 0:
        idx = torch.randint(0, state.pair_codes.shape[0], (cfg.batch_size,), generator=state.rng)
        decoded = state.g_prime.synthesize_batch(state.pair_codes[idx])
        paired = paired_loss(decoded, state.pair_targets[idx], state.nets)
    total = adv + cfg.lambda_semantic * semantic + cfg.lambda_paired * paired
    state.opt_g.zero_grad()
    total.backward()
    state.opt_g.step()
    state.g_prime.invalidate_w_mean()

    report = StepReport(
        step=state.step,
        adv=float(adv.detach()),
        d_loss=float(d_loss.detach()),
        semantic=float(semantic.detach()),
        paired=float(paired.detach()),
        total=float(total.detach()),
    )
    state.step += 1
    if not math.isfinite(report.total) or not math.isfinite(report.d_loss):
        raise NumericsError(f"fine-tuning diverged at step {report.step}: {report.to_json()}")
    return report


def finetune(
    gen: Generator,
    disc: Discriminator,
    style_images: torch.Tensor,
    cfg: FinetuneConfig,
    nets: FeatureNets,
    pairs: PairDataset | None = None,
    run_dir: str | Path | None = None,
) -> Generator:
    """Run the full loop; returns G'. Writes config/log/checkpoint under run_dir."""
    if style_images.dim() != 4 or style_images.shape[0] < 1:
        raise ConfigError(
            f"need a non-empty (N, 3, R, R) style image tensor, got {tuple(style_images.shape)}"
        )
    state = init_finetune(gen, disc, cfg, nets, pairs)
    log_file = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        resolved = {"finetune": asdict(cfg), "generator": gen.config.to_dict(), "role": cfg.role}
        (run_dir / "config.json").write_text(json.dumps(resolved, sort_keys=True, indent=1))
        log_file = (run_dir / "log.jsonl").open("w")
    try:
        for _ in range(cfg.iterations):
            idx = torch.randint(0, style_images.shape[0], (cfg.batch_size,), generator=state.rng)
            report = finetune_step(state, style_images[idx])
            if log_file is not None:
                log_file.write(report.to_json() + "\n")
    finally:
        if log_file is not None:
            log_file.close()
    if run_dir is not None:
        ckpt_dir = run_dir / f"ckpt_{state.step:06d}"
        save_generator(state.g_prime, ckpt_dir / "generator.fsck")
        save_discriminator(state.disc, ckpt_dir / "discriminator.fsck")
    state.g_prime.ensure_w_mean()
    return state.g_prime


@dataclass
class PretrainConfig:
    iterations: int = 1200
    batch_size: int = 8
    lr: float = 0.002
    seed: int = 0
    r1_weight: float = DEFAULT_R1_WEIGHT
    r1_interval: int = DEFAULT_R1_INTERVAL

    def __post_init__(self) -> None:
        if self.iterations < 0 or self.batch_size < 1 or self.lr < 0:
            raise ConfigError("pretrain iterations/batch_size/lr out of range")


def pretrain(
    config: GeneratorConfig,
    images: torch.Tensor,
    cfg: PretrainConfig,
    run_dir: str | Path | None = None,
) -> tuple[Generator, Discriminator]:
    """Plain adversarial training from scratch on the content corpus.

    Stands in for the large-scale pretrained model every later stage builds
    on. Lower learning rate than fine-tuning: training from random init is
    less forgiving than nudging a working model.
    """
    if images.dim() != 4 or images.shape[0] < 1:
        raise ConfigError(f"need a non-empty (N, 3, R, R) tensor, got {tuple(images.shape)}")
    if images.shape[-1] != config.resolution:
        raise ConfigError(
            f"images are {images.shape[-1]}px but the generator wants {config.resolution}px"
        )
    gen = Generator(config, seed=cfg.seed, role="pretrained")
    disc = Discriminator(config.resolution, config.channel_base,
                         torch.Generator().manual_seed(cfg.seed + 1))
    opt_g = torch.optim.Adam(gen.parameters(), lr=cfg.lr, betas=(0.0, 0.99))
    opt_d = torch.optim.Adam(disc.parameters(), lr=cfg.lr, betas=(0.0, 0.99))
    rng = torch.Generator().manual_seed(cfg.seed)
    log_file = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        resolved = {"pretrain": asdict(cfg), "generator": config.to_dict()}
        (run_dir / "config.json").write_text(json.dumps(resolved, sort_keys=True, indent=1))
        log_file = (run_dir / "log.jsonl").open("w")
    try:
        for step in range(cfg.iterations):
            idx = torch.randint(0, images.shape[0], (cfg.batch_size,), generator=rng)
            real = images[idx]
            z = torch.randn(cfg.batch_size, config.latent_dim, generator=rng)
            with torch.no_grad():
                fake = gen.forward_z(z)
            d_loss = adversarial_d_loss(disc(real), disc(fake))
            if cfg.r1_weight > 0 and step % cfg.r1_interval == 0:
                d_loss = d_loss + 0.5 * cfg.r1_weight * r1_penalty(disc, real)
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()

            fake = gen.forward_z(z)
            g_loss = adversarial_g_loss(disc(fake))
            opt_g.zero_grad()
            g_loss.backward()
            opt_g.step()
            gen.invalidate_w_mean()
            g_val = float(g_loss.detach())
            d_val = float(d_loss.detach())
            if not math.isfinite(g_val) or not math.isfinite(d_val):
                raise NumericsError(f"pretraining diverged at step {step}")
            if log_file is not None:
                log_file.write(json.dumps(
                    {"step": step, "g_loss": g_val, "d_loss": d_val},
                    sort_keys=True) + "\n")
    finally:
        if log_file is not None:
            log_file.close()
    gen.ensure_w_mean()
    if run_dir is not None:
        ckpt_dir = Path(run_dir) / f"ckpt_{cfg.iterations:06d}"
        save_generator(gen, ckpt_dir / "generator.fsck")
        save_discriminator(disc, ckpt_dir / "discriminator.fsck")
    return gen, disc
