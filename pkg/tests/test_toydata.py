import pytest
import torch

from facestyle.errors import InvalidParameterError
from facestyle.images import load_png, to_uint8
from facestyle.toydata import (
    STYLE_TRANSFORMS,
    make_content_set,
    make_style_set,
    stylize_cartoon,
    stylize_sketch,
    write_image_dir,
)


def test_content_set_shape_and_range():
    imgs = make_content_set(5, 16, seed=0)
    assert imgs.shape == (5, 3, 16, 16)
    assert imgs.dtype == torch.float32
    assert imgs.min() >= -1.0 and imgs.max() <= 1.0


def test_content_set_deterministic_by_seed():
    assert torch.equal(make_content_set(3, 16, seed=4), make_content_set(3, 16, seed=4))
    assert not torch.equal(make_content_set(3, 16, seed=4), make_content_set(3, 16, seed=5))


def test_portraits_differ_from_each_other():
    imgs = make_content_set(4, 16, seed=0)
    for i in range(3):
        assert not torch.equal(imgs[i], imgs[i + 1])


def test_style_transforms_deterministic():
    img = make_content_set(1, 16, seed=2)[0]
    assert torch.equal(stylize_cartoon(img), stylize_cartoon(img))
    assert torch.equal(stylize_sketch(img), stylize_sketch(img))


def test_style_transforms_change_the_image():
    img = make_content_set(1, 16, seed=2)[0]
    for name, fn in sorted(STYLE_TRANSFORMS.items()):
        out = fn(img)
        assert out.shape == img.shape, name
        assert out.min() >= -1.0 and out.max() <= 1.0, name
        assert not torch.equal(out, img), name


def test_style_set_matches_per_image_transform():
    base = make_content_set(3, 16, seed=9)
    styled = make_style_set("cartoon", 3, 16, seed=9)
    for i in range(3):
        assert torch.equal(styled[i], stylize_cartoon(base[i]))


def test_style_set_rejects_unknown_style():
    with pytest.raises(InvalidParameterError):
        make_style_set("oilpaint", 2, 16, seed=0)


def test_write_image_dir_round_trip(tmp_path):
    imgs = make_content_set(3, 16, seed=1)
    paths = write_image_dir(imgs, tmp_path / "out")
    assert len(paths) == 3
    assert [p.name for p in paths] == sorted(p.name for p in paths)
    for i, p in enumerate(paths):
        loaded = load_png(p)
        assert (to_uint8(loaded) == to_uint8(imgs[i])).all()
