"""Tests for the stylization pipelines and mixing policy."""

import pytest
import torch

from facestyle.encoder import Encoder, encode
from facestyle.errors import ConfigError, InvalidParameterError
from facestyle.generator import broadcast_w, truncate
from facestyle.inversion import ReferenceEmbedding
from facestyle.latent import LatentCode, Space
from facestyle.stylize import (
    MixSpec,
    NOISE_MIX_ANCHORS_18,
    REFERENCE_MIX_ANCHORS_18,
    StylePolicy,
    apply_mix,
    content_code,
    noise_tail,
    proportional_mix_indices,
    stylize_general,
    stylize_mixed,
    stylize_multimodal,
)
from facestyle.toydata import make_content_set


@pytest.fixture(scope="module")
def enc_w(tiny_gen):
    return Encoder(tiny_gen.config, Space.W, seed=6)


@pytest.fixture(scope="module")
def portrait(tiny_gen):
    return make_content_set(1, tiny_gen.config.resolution, seed=31)[0]


def test_mix_indices_identity_at_full_scale():
    assert proportional_mix_indices(18, NOISE_MIX_ANCHORS_18) == [6, 9, 12]
    assert proportional_mix_indices(18, REFERENCE_MIX_ANCHORS_18) == [3, 6, 9]


def test_mix_indices_scale_down():
    assert proportional_mix_indices(10, NOISE_MIX_ANCHORS_18) == [3, 5, 7]
    assert proportional_mix_indices(10, REFERENCE_MIX_ANCHORS_18) == [2, 3, 5]
    assert proportional_mix_indices(6, NOISE_MIX_ANCHORS_18) == [2, 3, 4]
    assert proportional_mix_indices(6, REFERENCE_MIX_ANCHORS_18) == [1, 2, 3]


def test_style_policy_validation():
    with pytest.raises(ConfigError):
        StylePolicy(style_id="cartoon", truncation_psi=1.5, generator_path="x")
    with pytest.raises(ConfigError):
        StylePolicy(style_id="", truncation_psi=0.7, generator_path="x")


def test_mix_spec_validation():
    MixSpec(k=3, tail_source="noise", truncation_psi=0.7, seed=1)
    MixSpec(k=3, tail_source="reference", truncation_psi=0.7, reference_id="cartoon/abc")
    with pytest.raises(InvalidParameterError):
        MixSpec(k=3, tail_source="blend", truncation_psi=0.7, seed=1)
    with pytest.raises(InvalidParameterError):
        MixSpec(k=-1, tail_source="noise", truncation_psi=0.7, seed=1)
    with pytest.raises(InvalidParameterError):
        MixSpec(k=3, tail_source="noise", truncation_psi=1.2, seed=1)
    with pytest.raises(InvalidParameterError):
        MixSpec(k=3, tail_source="noise", truncation_psi=0.7)
    with pytest.raises(InvalidParameterError):
        MixSpec(k=3, tail_source="reference", truncation_psi=0.7)


def test_content_code_shapes_and_truncation(tiny_gen, enc_w, portrait):
    code = content_code(portrait, enc_w, tiny_gen, psi=0.5)
    assert code.space is Space.WPLUS
    assert code.values.shape == (tiny_gen.layer_count, tiny_gen.config.latent_dim)
    # psi=1 leaves the encoded stack untouched
    full = content_code(portrait, enc_w, tiny_gen, psi=1.0)
    raw = broadcast_w(encode(portrait, enc_w), tiny_gen.layer_count)
    assert torch.equal(full.values, raw.values)
    # psi=0 collapses every row onto the mean
    zero = content_code(portrait, enc_w, tiny_gen, psi=0.0)
    assert torch.equal(zero.values, tiny_gen.ensure_w_mean().expand_as(zero.values))


def test_content_code_accepts_all_encoder_spaces(tiny_gen, portrait):
    for space in (Space.W, Space.WPLUS, Space.ZPLUS):
        enc = Encoder(tiny_gen.config, space, seed=8)
        code = content_code(portrait, enc, tiny_gen, psi=0.7)
        assert code.space is Space.WPLUS
        assert code.values.shape == (tiny_gen.layer_count, tiny_gen.config.latent_dim)


def test_mix_at_full_depth_reproduces_general(tiny_gen, enc_w, portrait):
    L = tiny_gen.layer_count
    plain = stylize_general(portrait, enc_w, tiny_gen, psi=0.7)
    tail = noise_tail(tiny_gen, seed=99, psi=0.7)
    mixed = stylize_mixed(portrait, enc_w, tiny_gen, tail, k=L, psi=0.7)
    assert torch.equal(mixed, plain)
    spec = MixSpec(k=L, tail_source="noise", truncation_psi=0.7, seed=99)
    assert torch.equal(apply_mix(portrait, enc_w, tiny_gen, spec), plain)


def test_mix_at_zero_depth_ignores_content(tiny_gen, enc_w):
    a, b = make_content_set(2, tiny_gen.config.resolution, seed=40)
    spec = MixSpec(k=0, tail_source="noise", truncation_psi=0.7, seed=5)
    assert torch.equal(
        apply_mix(a, enc_w, tiny_gen, spec), apply_mix(b, enc_w, tiny_gen, spec)
    )


def test_apply_mix_bounds_and_reference_requirement(tiny_gen, enc_w, portrait):
    spec = MixSpec(k=tiny_gen.layer_count + 1, tail_source="noise", truncation_psi=0.7, seed=1)
    with pytest.raises(InvalidParameterError):
        apply_mix(portrait, enc_w, tiny_gen, spec)
    ref_spec = MixSpec(k=2, tail_source="reference", truncation_psi=0.7, reference_id="c/x")
    with pytest.raises(InvalidParameterError):
        apply_mix(portrait, enc_w, tiny_gen, ref_spec, reference=None)


def test_reference_mix_uses_embedding(tiny_gen, enc_w, portrait):
    emb = ReferenceEmbedding(
        style_id="cartoon",
        image_hash="f" * 64,
        v_code=LatentCode(Space.V, torch.zeros(1, 4)),
        w_code=LatentCode(
            Space.W, torch.randn(1, tiny_gen.config.latent_dim,
                                 generator=torch.Generator().manual_seed(13))
        ),
        meta={},
    )
    spec = MixSpec(k=2, tail_source="reference", truncation_psi=0.7, reference_id=emb.reference_id)
    out = apply_mix(portrait, enc_w, tiny_gen, spec, reference=emb)
    content = content_code(portrait, enc_w, tiny_gen, psi=0.7)
    tail = truncate(broadcast_w(emb.w_code, tiny_gen.layer_count), 0.7, tiny_gen)
    expect = stylize_mixed(portrait, enc_w, tiny_gen, tail, k=2, psi=0.7)
    assert torch.equal(out, expect)
    assert not torch.equal(out, stylize_general(portrait, enc_w, tiny_gen, psi=0.7))
    assert content.values.shape == tail.values.shape


def test_multimodal_varies_only_with_seed(tiny_gen, enc_w, portrait):
    outs = stylize_multimodal(portrait, enc_w, tiny_gen, psi=0.7, k=2, seeds=[1, 2, 1])
    assert len(outs) == 3
    assert torch.equal(outs[0], outs[2])
    assert not torch.equal(outs[0], outs[1])


def test_multimodal_matches_single_mix(tiny_gen, enc_w, portrait):
    outs = stylize_multimodal(portrait, enc_w, tiny_gen, psi=0.7, k=2, seeds=[7])
    spec = MixSpec(k=2, tail_source="noise", truncation_psi=0.7, seed=7)
    assert torch.equal(outs[0], apply_mix(portrait, enc_w, tiny_gen, spec))


def test_multimodal_validation(tiny_gen, enc_w, portrait):
    with pytest.raises(InvalidParameterError):
        stylize_multimodal(portrait, enc_w, tiny_gen, psi=0.7, k=2, seeds=[])
    with pytest.raises(InvalidParameterError):
        stylize_multimodal(portrait, enc_w, tiny_gen, psi=0.7,
                           k=tiny_gen.layer_count + 1, seeds=[1])


def test_output_contract(tiny_gen, enc_w, portrait):
    out = stylize_general(portrait, enc_w, tiny_gen, psi=0.7)
    res = tiny_gen.config.resolution
    assert out.shape == (3, res, res)
    assert out.min() >= -1.0 and out.max() <= 1.0
    assert not out.requires_grad
