"""Linear degradation operators with exact pseudo-inverses.

Every operator here is a block-averaging map: each output entry is the
uniform mean of a disjoint group of input entries. That structure makes the
pseudo-inverse value replication and lets all maps run without ever
materializing a matrix.

Tensors are ``(..., C, H, W)``; any leading batch dimensions are carried
through unchanged.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import torch
from torch import Tensor
import torch.nn.functional as F

__all__ = [
    "OperatorKind",
    "DegradationOperator",
    "make_operator",
    "apply",
    "apply_pinv",
    "range_project",
    "null_project",
    "null_shrink",
]


class OperatorKind(str, enum.Enum):
    AVG_POOL = "avg_pool"
    DECOLORIZE = "decolorize"
    IDENTITY = "identity"


@dataclass(frozen=True)
class DegradationOperator:
    """A known linear degradation ``A`` together with ``A†``.

    Attributes:
        kind: Which averaging structure the operator uses.
        in_shape: ``(C, H, W)`` of the clean image.
        factor: Pooling factor per spatial axis. Only meaningful for
            ``avg_pool``; stored as 1 for the other kinds.
    """

    kind: OperatorKind
    in_shape: tuple[int, int, int]
    factor: int = 1

    @property
    def out_shape(self) -> tuple[int, int, int]:
        c, h, w = self.in_shape
        if self.kind is OperatorKind.AVG_POOL:
            return (c, h // self.factor, w // self.factor)
        if self.kind is OperatorKind.DECOLORIZE:
            return (1, h, w)
        return (c, h, w)

    @property
    def in_dim(self) -> int:
        c, h, w = self.in_shape
        return c * h * w

    @property
    def out_dim(self) -> int:
        c, h, w = self.out_shape
        return c * h * w

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "factor": self.factor, "in_shape": list(self.in_shape)}

    @classmethod
    def from_dict(cls, d: dict) -> DegradationOperator:
        return make_operator(d["kind"], tuple(d["in_shape"]), d.get("factor", 1))

    def _check(self, x: Tensor, shape: tuple[int, int, int], what: str) -> None:
        if tuple(x.shape[-3:]) != tuple(shape) or x.dim() < 3:
            raise ValueError(f"{what}: expected trailing shape {tuple(shape)}, got {tuple(x.shape)}")

    def apply(self, x: Tensor) -> Tensor:
        """Degrade ``x``: ``A x``."""
        self._check(x, self.in_shape, "apply")
        if self.kind is OperatorKind.AVG_POOL:
            lead = x.shape[:-3]
            y = F.avg_pool2d(x.reshape(-1, *self.in_shape), self.factor)
            return y.reshape(*lead, *self.out_shape)
        if self.kind is OperatorKind.DECOLORIZE:
            return x.mean(dim=-3, keepdim=True)
        return x

    def apply_pinv(self, y: Tensor) -> Tensor:
        """Lift a degraded tensor back to image space: ``A† y``.

        For block means ``A† = Aᵀ(AAᵀ)⁻¹`` reduces to copying each output
        value to every member of its group.
        """
        self._check(y, self.out_shape, "apply_pinv")
        if self.kind is OperatorKind.AVG_POOL:
            f = self.factor
            return y.repeat_interleave(f, dim=-2).repeat_interleave(f, dim=-1)
        if self.kind is OperatorKind.DECOLORIZE:
            return y.expand(*y.shape[:-3], self.in_shape[0], *y.shape[-2:]).clone()
        return y

    def range_project(self, x: Tensor) -> Tensor:
        """``A†A x``, the part of ``x`` the degradation keeps."""
        return self.apply_pinv(self.apply(x))

    def null_project(self, x: Tensor) -> Tensor:
        """``(I − A†A) x``, the part of ``x`` the degradation discards."""
        return x - self.range_project(x)

    def null_shrink(self, x: Tensor, lo: float = -1.0, hi: float = 1.0) -> Tensor:
        """Scale down the null-space content of ``x`` until it fits ``[lo, hi]``.

        Each averaging group gets its own factor in ``[0, 1]``, so ``A x`` is
        unchanged. The group means themselves must already lie in the bounds.
        """
        if self.kind is OperatorKind.IDENTITY:
            return x.clamp(lo, hi)
        rng = self.range_project(x)
        null = x - rng
        if not bool(((x > hi) | (x < lo)).any()):
            return x
        # the largest per-entry scale that keeps rng + s*null in bounds
        up = torch.where(null > 0, (hi - rng) / null.clamp_min(1e-12), torch.ones_like(x))
        down = torch.where(null < 0, (lo - rng) / null.clamp_max(-1e-12), torch.ones_like(x))
        s = torch.minimum(up, down).clamp(0.0, 1.0)
        s = self._group_min(s)
        return (rng + s * null).clamp(lo, hi)

    def _group_min(self, s: Tensor) -> Tensor:
        if self.kind is OperatorKind.AVG_POOL:
            lead = s.shape[:-3]
            m = -F.max_pool2d(-s.reshape(-1, *self.in_shape), self.factor)
            return self.apply_pinv(m.reshape(*lead, *self.out_shape))
        return s.amin(dim=-3, keepdim=True).expand_as(s)


def make_operator(kind: str | OperatorKind, in_shape: tuple[int, int, int], factor: int = 2) -> DegradationOperator:
    """Build and validate a degradation operator.

    Raises:
        ValueError: on an unknown kind, a bad factor, spatial dims not
            divisible by the pooling factor, or decolorize on non-RGB input.
    """
    try:
        kind = OperatorKind(kind)
    except ValueError:
        raise ValueError(f"unknown operator kind {kind!r}") from None
    if len(in_shape) != 3 or any(int(s) < 1 for s in in_shape):
        raise ValueError(f"in_shape must be (C, H, W) with positive dims, got {in_shape}")
    in_shape = tuple(int(s) for s in in_shape)
    c, h, w = in_shape
    if kind is OperatorKind.AVG_POOL:
        if int(factor) < 1:
            raise ValueError(f"factor must be a positive integer, got {factor}")
        if h % factor or w % factor:
            raise ValueError(f"spatial dims {(h, w)} not divisible by pooling factor {factor}")
        return DegradationOperator(kind, in_shape, int(factor))
    if kind is OperatorKind.DECOLORIZE and c != 3:
        raise ValueError(f"decolorize needs 3 input channels, got {c}")
    return DegradationOperator(kind, in_shape, 1)


def apply(op: DegradationOperator, x: Tensor) -> Tensor:
    return op.apply(x)


def apply_pinv(op: DegradationOperator, y: Tensor) -> Tensor:
    return op.apply_pinv(y)


def range_project(op: DegradationOperator, x: Tensor) -> Tensor:
    return op.range_project(x)


def null_project(op: DegradationOperator, x: Tensor) -> Tensor:
    return op.null_project(x)


def null_shrink(op: DegradationOperator, x: Tensor, lo: float = -1.0, hi: float = 1.0) -> Tensor:
    return op.null_shrink(x, lo, hi)
