"""Latent spaces and the tagged code container.

A LatentCode pairs a tensor with the space it lives in. Shape rules are
enforced at construction so downstream ops can trust the tag:

    Z, W      -> (1, dim)        single row
    ZPlus     -> (layers, dim)   one row per synthesis layer
    WPlus     -> (layers, dim)
    V         -> (1, k)          coefficients over a factorization basis

The container does not know a generator's layer count, so per-layer spaces
only require >= 2 rows here; ops that consume a code validate the exact row
count against the generator they run on.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import torch

from .errors import InvalidCodeError


class Space(str, Enum):
    Z = "Z"
    ZPLUS = "ZPlus"
    W = "W"
    WPLUS = "WPlus"
    V = "V"


SINGLE_ROW_SPACES = frozenset({Space.Z, Space.W, Space.V})
PER_LAYER_SPACES = frozenset({Space.ZPLUS, Space.WPLUS})


@dataclass(frozen=True)
class LatentCode:
    """An immutable latent code tagged with its space."""

    space: Space
    values: torch.Tensor

    def __post_init__(self) -> None:
        if not isinstance(self.space, Space):
            raise InvalidCodeError(f"space must be a Space enum member, got {self.space!r}")
        if not isinstance(self.values, torch.Tensor):
            raise InvalidCodeError("values must be a torch.Tensor")
        if self.values.dim() != 2:
            raise InvalidCodeError(
                f"latent values must be 2-D (rows, dim), got shape {tuple(self.values.shape)}"
            )
        if self.values.dtype != torch.float32:
            raise InvalidCodeError(f"latent values must be float32, got {self.values.dtype}")
        n_rows = self.values.shape[0]
        if self.space in SINGLE_ROW_SPACES and n_rows != 1:
            raise InvalidCodeError(
                f"{self.space.value} codes hold exactly one row, got {n_rows}"
            )
        if self.space in PER_LAYER_SPACES and n_rows < 2:
            raise InvalidCodeError(
                f"{self.space.value} codes hold one row per layer (>= 2), got {n_rows}"
            )
        if not torch.isfinite(self.values).all():
            raise InvalidCodeError(f"{self.space.value} code contains non-finite entries")

    @property
    def rows(self) -> int:
        return int(self.values.shape[0])

    @property
    def dim(self) -> int:
        return int(self.values.shape[1])

    def detached(self) -> "LatentCode":
        return LatentCode(self.space, self.values.detach().clone())

    def require_space(self, *spaces: Space) -> "LatentCode":
        if self.space not in spaces:
            allowed = ", ".join(s.value for s in spaces)
            raise InvalidCodeError(f"expected a code in {{{allowed}}}, got {self.space.value}")
        return self

    def require_rows(self, rows: int) -> "LatentCode":
        if self.rows != rows:
            raise InvalidCodeError(
                f"{self.space.value} code has {self.rows} rows, expected {rows}"
            )
        return self
