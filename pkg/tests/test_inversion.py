"""Tests for factor-basis inversion and the reference embedding cache."""

import logging

import pytest
import torch

from facestyle.errors import InvalidCodeError, InvalidParameterError
from facestyle.generator import broadcast_w, synthesize
from facestyle.inversion import (
    INVERTIBLE_SPACES,
    ReferenceCache,
    ReferenceEmbedding,
    broadcast_reference,
    decode_v,
    embed_reference,
    invert,
    sefa_basis,
)
from facestyle.images import image_hash
from facestyle.latent import LatentCode, Space


@pytest.fixture(scope="module")
def basis(tiny_gen):
    return sefa_basis(tiny_gen, k=8)


@pytest.fixture(scope="module")
def target(tiny_gen):
    z = torch.randn(1, tiny_gen.config.latent_dim, generator=torch.Generator().manual_seed(21))
    with torch.no_grad():
        return tiny_gen.forward_z(z)[0]


def test_basis_columns_are_orthonormal(basis):
    gram = basis.basis.T @ basis.basis
    assert torch.allclose(gram, torch.eye(basis.k), atol=1e-5)


def test_basis_anchor_is_w_mean(tiny_gen, basis):
    assert torch.equal(basis.anchor, tiny_gen.ensure_w_mean())
    assert basis.k == 8


def test_basis_is_deterministic(tiny_gen):
    a = sefa_basis(tiny_gen, k=8)
    b = sefa_basis(tiny_gen, k=8)
    assert torch.equal(a.basis, b.basis)
    assert torch.equal(a.anchor, b.anchor)


def test_basis_k_bounds(tiny_gen):
    with pytest.raises(InvalidParameterError):
        sefa_basis(tiny_gen, k=0)
    with pytest.raises(InvalidParameterError):
        sefa_basis(tiny_gen, k=tiny_gen.config.latent_dim + 1)


def test_decode_v_formula(basis):
    v = LatentCode(Space.V, torch.randn(1, basis.k, generator=torch.Generator().manual_seed(2)))
    w = decode_v(v, basis)
    assert w.space is Space.W
    assert torch.equal(w.values, basis.anchor + v.values @ basis.basis.T)


def test_decode_v_rejects_bad_input(basis):
    with pytest.raises(InvalidCodeError):
        decode_v(LatentCode(Space.W, torch.zeros(1, basis.k)), basis)
    with pytest.raises(InvalidParameterError):
        decode_v(LatentCode(Space.V, torch.zeros(1, basis.k + 1)), basis)


@pytest.mark.parametrize("space", INVERTIBLE_SPACES, ids=lambda s: s.value)
def test_invert_per_space(tiny_gen, nets, basis, target, space):
    res = invert(target, tiny_gen, space, nets, iterations=3, basis=basis, k=8)
    assert res.code.space is space
    L, d = tiny_gen.layer_count, tiny_gen.config.latent_dim
    expected_shape = {
        Space.ZPLUS: (L, d),
        Space.W: (1, d),
        Space.WPLUS: (L, d),
        Space.V: (1, 8),
    }[space]
    assert tuple(res.code.values.shape) == expected_shape
    assert res.loss_best <= res.loss_initial
    assert res.loss_best == min(res.curve)
    assert res.iterations_run == 3
    assert len(res.curve) == 3


def test_invert_recon_matches_code(tiny_gen, nets, basis, target):
    res = invert(target, tiny_gen, Space.V, nets, iterations=2, basis=basis)
    w = decode_v(res.code, basis)
    with torch.no_grad():
        again = synthesize(broadcast_w(w, tiny_gen.layer_count), tiny_gen)
    assert torch.equal(res.recon, again)


def test_invert_is_deterministic(tiny_gen, nets, target):
    a = invert(target, tiny_gen, Space.W, nets, iterations=3)
    b = invert(target, tiny_gen, Space.W, nets, iterations=3)
    assert torch.equal(a.code.values, b.code.values)
    assert a.curve == b.curve


def test_invert_builds_own_basis_when_missing(tiny_gen, nets, target):
    res = invert(target, tiny_gen, Space.V, nets, iterations=2, k=4)
    assert res.code.values.shape == (1, 4)


def test_invert_validation(tiny_gen, nets, target):
    with pytest.raises(InvalidParameterError):
        invert(target, tiny_gen, Space.Z, nets, iterations=1)
    with pytest.raises(InvalidParameterError):
        invert(target, tiny_gen, Space.W, nets, iterations=0)
    small = target[:, : target.shape[1] // 2, :]
    with pytest.raises(Exception):
        invert(small, tiny_gen, Space.W, nets, iterations=1)


def test_invert_reports_progress(tiny_gen, nets, target):
    seen = []
    res = invert(target, tiny_gen, Space.W, nets, iterations=3,
                 on_step=lambda step, value: seen.append((step, value)))
    assert [s for s, _ in seen] == [0, 1, 2]
    assert [v for _, v in seen] == res.curve


def test_cache_round_trip(basis, tmp_path):
    cache = ReferenceCache(tmp_path)
    assert cache.get("cartoon", "a" * 64) is None
    emb = ReferenceEmbedding(
        style_id="cartoon",
        image_hash="a" * 64,
        v_code=LatentCode(Space.V, torch.randn(1, 8, generator=torch.Generator().manual_seed(3))),
        w_code=LatentCode(Space.W, basis.anchor.clone()),
        meta={"iterations": 5},
    )
    cache.put(emb)
    got = cache.get("cartoon", "a" * 64)
    assert got is not None
    assert got.reference_id == "cartoon/" + "a" * 64
    assert torch.equal(got.v_code.values, emb.v_code.values)
    assert torch.equal(got.w_code.values, emb.w_code.values)
    assert got.meta["iterations"] == 5
    assert cache.list_ids("cartoon") == ["a" * 64]
    assert cache.list_ids("sketch") == []


def test_cache_damage_is_a_miss_not_an_error(basis, tmp_path, caplog):
    cache = ReferenceCache(tmp_path)
    emb = ReferenceEmbedding(
        style_id="cartoon",
        image_hash="b" * 64,
        v_code=LatentCode(Space.V, torch.zeros(1, 8)),
        w_code=LatentCode(Space.W, basis.anchor.clone()),
        meta={},
    )
    entry = cache.put(emb)
    (entry / "v.f32").write_bytes(b"\x00" * 4)
    with caplog.at_level(logging.WARNING, logger="facestyle.inversion"):
        assert cache.get("cartoon", "b" * 64) is None
    assert any("miss" in rec.message for rec in caplog.records)


def test_cache_rejects_relocated_entry(basis, tmp_path):
    cache = ReferenceCache(tmp_path)
    emb = ReferenceEmbedding(
        style_id="cartoon",
        image_hash="c" * 64,
        v_code=LatentCode(Space.V, torch.zeros(1, 8)),
        w_code=LatentCode(Space.W, basis.anchor.clone()),
        meta={},
    )
    entry = cache.put(emb)
    moved = entry.parent / ("d" * 64)
    entry.rename(moved)
    assert cache.get("cartoon", "d" * 64) is None


def test_embed_reference_uses_cache(tiny_gen, nets, basis, target, tmp_path):
    cache = ReferenceCache(tmp_path)
    first, steps_first = embed_reference(
        target, tiny_gen, "cartoon", cache, nets, basis=basis, iterations=3
    )
    assert steps_first == 3
    assert first.image_hash == image_hash(target)
    assert torch.equal(first.w_code.values, decode_v(first.v_code, basis).values)

    second, steps_second = embed_reference(
        target, tiny_gen, "cartoon", cache, nets, basis=basis, iterations=3
    )
    assert steps_second == 0
    assert torch.equal(second.v_code.values, first.v_code.values)
    assert torch.equal(second.w_code.values, first.w_code.values)

    # a fresh cache object over the same directory still hits
    third, steps_third = embed_reference(
        target, tiny_gen, "cartoon", ReferenceCache(tmp_path), nets, basis=basis, iterations=3
    )
    assert steps_third == 0
    assert torch.equal(third.v_code.values, first.v_code.values)


def test_broadcast_reference_rows(tiny_gen, basis):
    emb = ReferenceEmbedding(
        style_id="cartoon",
        image_hash="e" * 64,
        v_code=LatentCode(Space.V, torch.zeros(1, 8)),
        w_code=LatentCode(Space.W, basis.anchor.clone()),
        meta={},
    )
    stack = broadcast_reference(emb, tiny_gen)
    assert stack.space is Space.WPLUS
    assert stack.values.shape == (tiny_gen.layer_count, tiny_gen.config.latent_dim)
    assert all(torch.equal(row, emb.w_code.values[0]) for row in stack.values)
