"""Command-line entry points.

    facestyle <subcommand> --workspace DIR [flags]

Training commands take an exclusive lock on the workspace so two writers
cannot race. Exit codes: 0 success, 2 configuration or usage error,
3 numeric divergence.
"""

from __future__ import annotations

import argparse
import contextlib
import fcntl
import json
import logging
import sys
from pathlib import Path

import torch

from . import pseudo_pairs, toydata
from .encoder import Encoder, EncoderTrainConfig, save_encoder, train_encoder
from .errors import FacestyleError, NumericsError
from .finetune import (
    FinetuneConfig,
    PretrainConfig,
    finetune,
    load_discriminator,
    pretrain,
    save_discriminator,
)
from .generator import Generator, save_generator, synthesize
from .images import image_hash, load_png, prepare_input, save_png
from .inversion import embed_reference, invert, sefa_basis
from .latent import Space
from .losses import identity_loss, lpips
from .metrics import fid, identity_distance, semantic_distance
from .stylize import MixSpec, apply_mix, content_code, stylize_general
from .checkpoint import checkpoint_hash
from .workspace import ENCODER_FILES, Workspace

log = logging.getLogger("facestyle")

SPACE_BY_FLAG = {"w": Space.W, "wplus": Space.WPLUS, "zplus": Space.ZPLUS}


@contextlib.contextmanager
def workspace_lock(ws: Workspace):
    ws.root.mkdir(parents=True, exist_ok=True)
    lock_path = ws.root / ".lock"
    with open(lock_path, "w") as fh:
        try:
            fcntl.flock(fh, fcntl.LOCK_EX | fcntl.LOCK_NB)
        except OSError as exc:
            raise FacestyleError(
                f"another training command holds the workspace lock at {lock_path}"
            ) from exc
        yield


def load_image_dir(path: Path, resolution: int) -> torch.Tensor:
    if not path.is_dir():
        raise FacestyleError(f"image directory not found: {path}")
    files = sorted(p for p in path.iterdir() if p.suffix.lower() == ".png")
    if not files:
        raise FacestyleError(f"no .png images in {path}")
    return torch.stack([prepare_input(load_png(p), resolution) for p in files])


def sample_images(gen: Generator, count: int, seed: int, batch: int = 8) -> torch.Tensor:
    rng = torch.Generator().manual_seed(seed)
    outs = []
    with torch.no_grad():
        remaining = count
        while remaining > 0:
            n = min(batch, remaining)
            z = torch.randn(n, gen.config.latent_dim, generator=rng)
            outs.append(gen.forward_z(z))
            remaining -= n
    return torch.cat(outs)


def merged_config(cls, section: dict, **cli_values):
    """Dataclass defaults < config section < explicit CLI flags."""
    merged = dict(section)
    merged.update({k: v for k, v in cli_values.items() if v is not None})
    return cls(**merged)


# --- subcommands ---


def cmd_make_toy_data(ws: Workspace, args) -> None:
    res = ws.generator_config().resolution
    content = toydata.make_content_set(args.content_count, res, ws.config["seed"])
    toydata.write_image_dir(content, ws.content_dir)
    for style in args.styles.split(","):
        images = toydata.make_style_set(style, args.style_count, res, ws.config["seed"] + 1)
        toydata.write_image_dir(images, ws.style_data_dir(style))
    ws.save_config()
    print(f"wrote {args.content_count} content and {args.style_count} style images per style")


def cmd_pretrain(ws: Workspace, args) -> None:
    cfg = merged_config(
        PretrainConfig, ws.section("pretrain"), iterations=args.iters, seed=args.seed
    )
    images = load_image_dir(ws.content_dir, ws.generator_config().resolution)
    with workspace_lock(ws):
        gen, disc = pretrain(ws.generator_config(), images, cfg, run_dir=ws.run_dir("pretrain"))
        save_generator(gen, ws.pretrained_dir / "generator.fsck")
        save_discriminator(disc, ws.pretrained_dir / "discriminator.fsck")
    print(f"pretrained generator saved to {ws.pretrained_dir / 'generator.fsck'}")


def cmd_train_encoders(ws: Workspace, args) -> None:
    gen = ws.load_pretrained()
    nets = ws.feature_nets()
    images = load_image_dir(ws.content_dir, gen.config.resolution)
    cfg = merged_config(
        EncoderTrainConfig, ws.section("encoders"), steps=args.steps, seed=args.seed
    )
    with workspace_lock(ws):
        for flag in args.spaces.split(","):
            space = SPACE_BY_FLAG.get(flag.strip())
            if space is None:
                raise FacestyleError(f"unknown encoder space {flag!r}, use w, wplus, or zplus")
            enc = Encoder(gen.config, space, seed=ws.config["seed"])
            train_encoder(enc, gen, images, cfg, nets)
            out = ws.encoders_dir / ENCODER_FILES[space]
            save_encoder(enc, out)
            print(f"trained {space.value} encoder -> {out}")


def cmd_finetune_unconstrained(ws: Workspace, args) -> None:
    gen = ws.load_pretrained()
    disc = load_discriminator(ws.pretrained_dir / "discriminator.fsck")
    style_images = load_image_dir(ws.style_data_dir(args.style), gen.config.resolution)
    cfg = merged_config(
        FinetuneConfig,
        ws.section("finetune"),
        iterations=args.iters,
        seed=args.seed,
        lambda_semantic=0.0,
        lambda_paired=0.0,
    )
    with workspace_lock(ws):
        g_star = finetune(
            gen,
            disc,
            style_images,
            cfg,
            ws.feature_nets(),
            run_dir=ws.run_dir(f"{args.style}-unconstrained"),
        )
        out = ws.style_model_dir(args.style) / "gstar.fsck"
        save_generator(g_star, out)
    print(f"unconstrained fine-tuned generator saved to {out}")


def cmd_make_pairs(ws: Workspace, args) -> None:
    gen = ws.load_pretrained()
    g_star = ws.load_gstar(args.style)
    enc_z = ws.load_encoder_for(Space.ZPLUS)
    enc_w = ws.load_encoder_for(Space.WPLUS)
    cfg = merged_config(
        pseudo_pairs.PairGenConfig, ws.section("pairs"), iterations=args.iters, seed=args.seed
    )
    with workspace_lock(ws):
        report = pseudo_pairs.build_pair_dataset(
            ws.style_data_dir(args.style),
            gen,
            g_star,
            enc_z,
            enc_w,
            cfg,
            ws.pairs_dir(args.style),
            ws.feature_nets(),
            style_name=args.style,
            gen_hash=checkpoint_hash(ws.pretrained_dir / "generator.fsck"),
            gstar_hash=checkpoint_hash(ws.style_model_dir(args.style) / "gstar.fsck"),
        )
    print(
        json.dumps(
            {
                "built": report.built,
                "skipped_existing": report.skipped_existing,
                "skipped_unreadable": report.skipped_unreadable,
                "optimization_steps": report.optimization_steps,
                "dataset_hash": report.dataset_hash,
            },
            sort_keys=True,
        )
    )


def cmd_finetune(ws: Workspace, args) -> None:
    gen = ws.load_pretrained()
    disc = load_discriminator(ws.pretrained_dir / "discriminator.fsck")
    style_images = load_image_dir(ws.style_data_dir(args.style), gen.config.resolution)
    cfg = merged_config(
        FinetuneConfig,
        ws.section("finetune"),
        iterations=args.iters,
        seed=args.seed,
        pair_level=args.pair_level,
        lambda_semantic=args.lambda_semantic,
        lambda_paired=args.lambda_paired,
        lambda_id=args.lambda_id,
    )
    pairs = None
    if cfg.lambda_paired > 0:
        pairs = pseudo_pairs.load_pair_dataset(ws.pairs_dir(args.style))
    with workspace_lock(ws):
        g_prime = finetune(
            gen,
            disc,
            style_images,
            cfg,
            ws.feature_nets(),
            pairs=pairs,
            run_dir=ws.run_dir(f"{args.style}-finetune"),
        )
        out = ws.style_model_dir(args.style) / "generator.fsck"
        save_generator(g_prime, out)
        if args.psi is not None:
            styles = ws.config.setdefault("styles", {})
            styles.setdefault(args.style, {})["truncation_psi"] = args.psi
            ws.save_config()
        policy = ws.write_policy(args.style, cfg.pair_level)
    print(f"fine-tuned generator saved to {out} (psi={policy.truncation_psi})")


def _load_input_image(path: str, resolution: int) -> torch.Tensor:
    return prepare_input(load_png(path), resolution)


def cmd_stylize(ws: Workspace, args) -> None:
    policy = ws.load_policy(args.style)
    gen = ws.load_style_generator(args.style)
    enc = ws.load_encoder_for(Space.W)
    psi = args.psi if args.psi is not None else policy.truncation_psi
    image = _load_input_image(args.input, gen.config.resolution)
    out = stylize_general(image, enc, gen, psi)
    save_png(out, args.output)
    print(f"stylized image written to {args.output}")


def cmd_mix(ws: Workspace, args) -> None:
    policy = ws.load_policy(args.style)
    gen = ws.load_style_generator(args.style)
    enc = ws.load_encoder_for(Space.W)
    psi = args.psi if args.psi is not None else policy.truncation_psi
    image = _load_input_image(args.input, gen.config.resolution)
    reference = None
    if args.reference_id is not None:
        spec = MixSpec(
            k=args.k, tail_source="reference", truncation_psi=psi, reference_id=args.reference_id
        )
        ref_style, _, ref_hash = args.reference_id.partition("/")
        if ref_style != args.style:
            raise FacestyleError(
                f"reference {args.reference_id!r} belongs to style {ref_style!r}, "
                f"not {args.style!r}"
            )
        reference = ws.reference_cache().get(args.style, ref_hash)
        if reference is None:
            raise FacestyleError(f"unknown reference {args.reference_id!r}")
    else:
        if args.seed is None:
            raise FacestyleError("mix needs either --seed (noise) or --reference-id")
        spec = MixSpec(k=args.k, tail_source="noise", truncation_psi=psi, seed=args.seed)
    out = apply_mix(image, enc, gen, spec, reference)
    save_png(out, args.output)
    print(f"mixed image written to {args.output}")


def cmd_invert_ref(ws: Workspace, args) -> None:
    policy = ws.load_policy(args.style)
    gen = ws.load_style_generator(args.style)
    image = _load_input_image(args.image, gen.config.resolution)
    emb, steps = embed_reference(
        image,
        gen,
        args.style,
        ws.reference_cache(),
        ws.feature_nets(),
        iterations=args.iters,
        k=args.k,
        gen_hash=checkpoint_hash(Path(policy.generator_path)),
    )
    print(json.dumps({"reference_id": emb.reference_id, "optimization_steps": steps}))


def cmd_evaluate(ws: Workspace, args) -> None:
    gen = ws.load_pretrained()
    g_prime = ws.load_style_generator(args.style)
    nets = ws.feature_nets()
    fidx = ws.fid_extractor()
    count = args.count if args.count is not None else ws.section("evaluate").get("count", 64)
    seed = args.seed if args.seed is not None else ws.config["seed"]

    sd = semantic_distance(gen, g_prime, count, seed, nets)
    a = sample_images(gen, count, seed)
    b = sample_images(g_prime, count, seed)
    idd = identity_distance(a, b, nets)
    style_images = load_image_dir(ws.style_data_dir(args.style), gen.config.resolution)
    style_fid = fid(fidx.extract(b), fidx.extract(style_images))

    report = [
        {"metric": "semantic_distance", "value": sd,
         "extractor_id": nets.extractor_id, "n": count, "seed": seed},
        {"metric": "identity_distance", "value": idd,
         "extractor_id": nets.extractor_id, "n": count, "seed": seed},
        {"metric": "fid_style", "value": style_fid,
         "extractor_id": fidx.extractor_id, "n": count, "seed": seed},
    ]
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    out = ws.reports_dir / f"eval_{args.style}.json"
    out.write_text(json.dumps(report, sort_keys=True, indent=1))
    print(json.dumps(report, sort_keys=True, indent=1))


# --- studies ---


def _study_metrics(ws: Workspace, gen, g_prime, style_images, count, seed) -> dict:
    nets = ws.feature_nets()
    fidx = ws.fid_extractor()
    samples = sample_images(g_prime, count, seed)
    return {
        "semantic_distance": semantic_distance(gen, g_prime, count, seed, nets),
        "fid_style": fid(fidx.extract(samples), fidx.extract(style_images)),
    }


def _short_finetune(ws: Workspace, gen, style_images, pairs, **overrides):
    disc = load_discriminator(ws.pretrained_dir / "discriminator.fsck")
    base = dict(ws.section("finetune"))
    base.update(overrides)
    cfg = FinetuneConfig(**base)
    return finetune(gen, disc, style_images, cfg, ws.feature_nets(), pairs=pairs)


def cmd_study(ws: Workspace, args) -> None:
    style = args.style
    gen = ws.load_pretrained()
    nets = ws.feature_nets()
    rows: list[dict] = []

    if args.which == "pair-level":
        style_images = load_image_dir(ws.style_data_dir(style), gen.config.resolution)
        pairs = pseudo_pairs.load_pair_dataset(ws.pairs_dir(style))
        for level in pseudo_pairs.PAIR_LEVELS:
            g_prime = _short_finetune(
                ws, gen, style_images, pairs,
                iterations=args.iters, pair_level=level, seed=args.seed or 0,
            )
            row = {"pair_level": level}
            row.update(_study_metrics(ws, gen, g_prime, style_images, args.count, args.seed or 0))
            rows.append(row)

    elif args.which == "sweep":
        style_images = load_image_dir(ws.style_data_dir(style), gen.config.resolution)
        pairs = pseudo_pairs.load_pair_dataset(ws.pairs_dir(style))
        for lam in (0.001, 0.01, 0.1, 1.0, 10.0):
            g_prime = _short_finetune(
                ws, gen, style_images, None,
                iterations=args.iters, lambda_semantic=lam, lambda_paired=0.0,
                seed=args.seed or 0,
            )
            row = {"phase": "semantic", "lambda_semantic": lam, "lambda_paired": 0.0}
            row.update(_study_metrics(ws, gen, g_prime, style_images, args.count, args.seed or 0))
            rows.append(row)
        for i in range(11):
            lam = i * 0.5
            g_prime = _short_finetune(
                ws, gen, style_images, pairs if lam > 0 else None,
                iterations=args.iters, lambda_semantic=1.0, lambda_paired=lam,
                seed=args.seed or 0,
            )
            row = {"phase": "paired", "lambda_semantic": 1.0, "lambda_paired": lam}
            row.update(_study_metrics(ws, gen, g_prime, style_images, args.count, args.seed or 0))
            rows.append(row)

    elif args.which == "content-space":
        g_prime = ws.load_style_generator(style)
        policy = ws.load_policy(style)
        content = load_image_dir(ws.content_dir, gen.config.resolution)[: args.count]
        for flag in ("w", "wplus", "zplus"):
            enc = ws.load_encoder_for(SPACE_BY_FLAG[flag])
            recon_vals, ident_vals = [], []
            with torch.no_grad():
                for img in content:
                    code = content_code(img, enc, gen, 1.0)
                    recon = synthesize(code, gen)
                    recon_vals.append(float(lpips(recon, img, nets.perceptual)))
                    styled = stylize_general(img, enc, g_prime, policy.truncation_psi)
                    ident_vals.append(float(identity_loss(styled, img, nets.identity)))
            rows.append(
                {
                    "space": SPACE_BY_FLAG[flag].value,
                    "recon_perceptual": sum(recon_vals) / len(recon_vals),
                    "stylized_identity": sum(ident_vals) / len(ident_vals),
                }
            )

    elif args.which == "ref-space":
        g_prime = ws.load_style_generator(style)
        style_images = load_image_dir(ws.style_data_dir(style), gen.config.resolution)
        target = style_images[0]
        basis = sefa_basis(g_prime, args.k)
        for space in (Space.V, Space.W, Space.WPLUS, Space.ZPLUS):
            res = invert(
                target, g_prime, space, nets, iterations=args.iters, basis=basis, k=args.k
            )
            rows.append(
                {
                    "space": space.value,
                    "loss_initial": res.loss_initial,
                    "loss_best": res.loss_best,
                }
            )
    else:
        raise FacestyleError(f"unknown study {args.which!r}")

    report = {"study": args.which, "style": style, "rows": rows}
    ws.reports_dir.mkdir(parents=True, exist_ok=True)
    out = ws.reports_dir / f"study_{args.which}_{style}.json"
    out.write_text(json.dumps(report, sort_keys=True, indent=1))
    print(json.dumps(report, sort_keys=True, indent=1))


def cmd_serve(ws: Workspace, args) -> None:
    import uvicorn

    from .service import create_app

    service_cfg = ws.section("service")
    app = create_app(
        ws,
        worker_count=int(service_cfg.get("workers", 1)),
        max_pending=int(service_cfg.get("max_pending", 4)),
        static_dir=args.static if args.static else service_cfg.get("static_dir"),
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")


# --- parser ---


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="facestyle", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, style=False):
        p.add_argument("--workspace", required=True, help="workspace directory")
        p.add_argument("--config", help="JSON file with config overrides")
        p.add_argument("--seed", type=int, default=None)
        if style:
            p.add_argument("--style", required=True)
        return p

    p = common(sub.add_parser("make-toy-data", help="generate the sprite corpora"))
    p.add_argument("--content-count", type=int, default=256)
    p.add_argument("--style-count", type=int, default=64)
    p.add_argument("--styles", default="cartoon,sketch")
    p.set_defaults(func=cmd_make_toy_data)

    p = common(sub.add_parser("pretrain", help="train the base generator"))
    p.add_argument("--iters", type=int, default=None)
    p.set_defaults(func=cmd_pretrain)

    p = common(sub.add_parser("train-encoders", help="train image-to-latent encoders"))
    p.add_argument("--spaces", default="w,wplus,zplus")
    p.add_argument("--steps", type=int, default=None)
    p.set_defaults(func=cmd_train_encoders)

    p = common(sub.add_parser("finetune-unconstrained", help="style fine-tune, no constraints"),
               style=True)
    p.add_argument("--iters", type=int, default=None)
    p.set_defaults(func=cmd_finetune_unconstrained)

    p = common(sub.add_parser("make-pairs", help="build the pseudo-pair dataset"), style=True)
    p.add_argument("--iters", type=int, default=None)
    p.set_defaults(func=cmd_make_pairs)

    p = common(sub.add_parser("finetune", help="constrained style fine-tune"), style=True)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--pair-level", type=int, default=None)
    p.add_argument("--lambda-semantic", type=float, default=None)
    p.add_argument("--lambda-paired", type=float, default=None)
    p.add_argument("--lambda-id", type=float, default=None)
    p.add_argument("--psi", type=float, default=None)
    p.set_defaults(func=cmd_finetune)

    p = common(sub.add_parser("stylize", help="stylize one portrait"), style=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--psi", type=float, default=None)
    p.set_defaults(func=cmd_stylize)

    p = common(sub.add_parser("mix", help="stylize with a mixed tail"), style=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--psi", type=float, default=None)
    p.add_argument("--reference-id", default=None)
    p.set_defaults(func=cmd_mix)

    p = common(sub.add_parser("invert-ref", help="embed a style reference image"), style=True)
    p.add_argument("--image", required=True)
    p.add_argument("--iters", type=int, default=300)
    p.add_argument("--k", type=int, default=64)
    p.set_defaults(func=cmd_invert_ref)

    p = common(sub.add_parser("evaluate", help="metric report for a style"), style=True)
    p.add_argument("--count", type=int, default=None)
    p.set_defaults(func=cmd_evaluate)

    p = common(
        sub.add_parser("study", help="ablation tables: content-space, ref-space, pair-level, sweep"),
        style=True,
    )
    p.add_argument("which", choices=["content-space", "ref-space", "pair-level", "sweep"])
    p.add_argument("--iters", type=int, default=80)
    p.add_argument("--count", type=int, default=32)
    p.add_argument("--k", type=int, default=64)
    p.set_defaults(func=cmd_study)

    p = common(sub.add_parser("serve", help="run the studio HTTP service"))
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--static", default=None, help="directory of static frontend files")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    torch.set_num_threads(1)
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    if args.config:
        cfg_path = Path(args.config)
        if not cfg_path.is_file():
            print(f"config file not found: {cfg_path}", file=sys.stderr)
            return 2
        try:
            overrides = json.loads(cfg_path.read_text())
        except json.JSONDecodeError as exc:
            print(f"invalid config JSON: {exc}", file=sys.stderr)
            return 2
    if args.seed is not None:
        overrides["seed"] = args.seed
    try:
        ws = Workspace(args.workspace, overrides)
        args.func(ws, args)
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except FacestyleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
