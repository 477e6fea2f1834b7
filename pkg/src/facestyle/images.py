"""Image tensor conventions and PNG round-trips.

Images are float32 torch tensors shaped (3, H, W) with values in [-1, 1].
PNG files store the same content as 8-bit RGB; the uint8 <-> float mapping is
the linear one (0 -> -1, 255 -> 1) in both directions so a save/load round
trip is stable after the first quantization.
"""

from __future__ import annotations

import base64
import hashlib
import io
from pathlib import Path

import numpy as np
import torch
from PIL import Image, UnidentifiedImageError

from .errors import InvalidImageError


def validate_image(img: torch.Tensor, resolution: int | None = None) -> torch.Tensor:
    if not isinstance(img, torch.Tensor):
        raise InvalidImageError("image must be a torch.Tensor")
    if img.dim() != 3 or img.shape[0] != 3:
        raise InvalidImageError(f"image must be (3, H, W), got {tuple(img.shape)}")
    if resolution is not None and (img.shape[1] != resolution or img.shape[2] != resolution):
        raise InvalidImageError(
            f"image must be {resolution}x{resolution}, got {img.shape[1]}x{img.shape[2]}"
        )
    if not torch.isfinite(img).all():
        raise InvalidImageError("image contains non-finite values")
    return img


def to_uint8(img: torch.Tensor) -> np.ndarray:
    """[-1, 1] float (3, H, W) -> uint8 (H, W, 3), clamped."""
    validate_image(img)
    arr = img.detach().clamp(-1.0, 1.0).numpy()
    arr = np.transpose(arr, (1, 2, 0))
    return np.round((arr + 1.0) * 127.5).astype(np.uint8)


def from_uint8(arr: np.ndarray) -> torch.Tensor:
    """uint8 (H, W, 3) -> [-1, 1] float32 (3, H, W)."""
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise InvalidImageError(f"expected uint8 (H, W, 3), got {arr.dtype} {arr.shape}")
    t = torch.from_numpy(np.ascontiguousarray(np.transpose(arr, (2, 0, 1))))
    return t.to(torch.float32) / 127.5 - 1.0


def encode_png(img: torch.Tensor) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(to_uint8(img), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> torch.Tensor:
    try:
        with Image.open(io.BytesIO(data)) as im:
            arr = np.asarray(im.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise InvalidImageError(f"not a decodable image: {exc}") from exc
    return from_uint8(arr)


def save_png(img: torch.Tensor, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(img))


def load_png(path: str | Path) -> torch.Tensor:
    p = Path(path)
    if not p.is_file():
        raise InvalidImageError(f"no such image file: {p}")
    return decode_png(p.read_bytes())


def image_to_b64(img: torch.Tensor) -> str:
    return base64.b64encode(encode_png(img)).decode("ascii")


def b64_to_image(data: str) -> torch.Tensor:
    try:
        raw = base64.b64decode(data, validate=True)
    except (ValueError, TypeError) as exc:
        raise InvalidImageError(f"invalid base64 payload: {exc}") from exc
    return decode_png(raw)


def image_hash(img: torch.Tensor) -> str:
    """Content hash of the quantized pixels (independent of PNG encoder details)."""
    return hashlib.sha256(to_uint8(img).tobytes()).hexdigest()


def prepare_input(img: torch.Tensor, resolution: int) -> torch.Tensor:
    """Center-crop to square and resize to the working resolution.

    Shared by the CLI and the HTTP service so the two front doors produce
    bit-identical model inputs for the same source image.
    """
    validate_image(img)
    _, h, w = img.shape
    side = min(h, w)
    top = (h - side) // 2
    left = (w - side) // 2
    img = img[:, top : top + side, left : left + side]
    if side != resolution:
        img = torch.nn.functional.interpolate(
            img.unsqueeze(0), size=(resolution, resolution), mode="bilinear", align_corners=False
        ).squeeze(0)
    return img
