"""The stylization control surface, driven through the Python API: truncation,
multimodal noise tails, the mixing index k, and reference-guided tails.

Needs the workspace from demos/01_full_pipeline.py.

    python3 demos/02_mixing_controls.py --workspace /tmp/facestyle_demo
"""

import argparse
from pathlib import Path

import torch

from facestyle.images import load_png, save_png
from facestyle.inversion import embed_reference, sefa_basis
from facestyle.latent import Space
from facestyle.stylize import (
    REFERENCE_MIX_ANCHORS_18,
    MixSpec,
    apply_mix,
    proportional_mix_indices,
    stylize_general,
    stylize_multimodal,
)
from facestyle.workspace import Workspace


def row(images):
    return torch.cat(list(images), dim=2)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--workspace", default="/tmp/facestyle_demo")
    ap.add_argument("--style", default="cartoon")
    args = ap.parse_args()

    root = Path(args.workspace)
    ws = Workspace(root / "ws")
    out_dir = root / "mixing"
    out_dir.mkdir(exist_ok=True)

    gen = ws.load_style_generator(args.style)
    enc = ws.load_encoder_for(Space.W)
    policy = ws.load_policy(args.style)
    nets = ws.feature_nets()
    L = gen.layer_count
    portrait = load_png(ws.content_dir / "img_00000.png")

    # truncation sweep: psi=0 is the average face, psi=1 keeps every quirk
    sweep = [stylize_general(portrait, enc, gen, psi) for psi in (0.0, 0.3, 0.7, 1.0)]
    save_png(row(sweep), out_dir / "truncation_sweep.png")

    # one content code, four noise tails: texture varies, the face does not
    k_noise = policy.default_mix_indices[1]
    variants = stylize_multimodal(portrait, enc, gen, policy.truncation_psi,
                                  k=k_noise, seeds=[1, 2, 3, 4])
    save_png(row(variants), out_dir / "multimodal.png")

    # k sweep: small k hands most layers to the tail, k=L is pure content
    ks = sorted({0, L // 4, L // 2, 3 * L // 4, L})
    outs = [stylize_multimodal(portrait, enc, gen, policy.truncation_psi,
                               k=k, seeds=[7])[0] for k in ks]
    save_png(row(outs), out_dir / "k_sweep.png")
    print(f"k sweep over {ks} (layer count {L})")

    # reference-guided: invert a style exemplar once, reuse it from the cache
    ref_img = load_png(ws.style_data_dir(args.style) / "img_00001.png")
    emb, steps = embed_reference(ref_img, gen, args.style, ws.reference_cache(),
                                 nets, basis=sefa_basis(gen, k=16), iterations=40)
    print(f"reference embedded in {steps} optimization steps "
          f"(0 means the cache already had it)")
    k_ref = proportional_mix_indices(L, REFERENCE_MIX_ANCHORS_18)[1]
    spec = MixSpec(k=k_ref, tail_source="reference",
                   truncation_psi=policy.truncation_psi, reference_id=emb.reference_id)
    guided = apply_mix(portrait, enc, gen, spec, emb)
    save_png(row([portrait, ref_img, guided]), out_dir / "reference_guided.png")

    print(f"wrote {out_dir}/truncation_sweep.png, multimodal.png, "
          f"k_sweep.png, reference_guided.png")


if __name__ == "__main__":
    main()
