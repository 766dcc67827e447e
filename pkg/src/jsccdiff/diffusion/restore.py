"""Null-space restoration with a pretrained ε-prediction DDPM.

At every reverse step the model's clean-image estimate has its range-space
component overwritten by the received degraded image, so the final output
degrades back to exactly what the receiver decoded.
"""

from __future__ import annotations

from typing import Callable, Sequence

import torch
import torch.nn as nn
from torch import Tensor

from ..errors import NumericalError
from ..linops import DegradationOperator
from .schedule import (
    NoiseSchedule,
    predict_x0,
    renoise,
    reverse_sample,
    sampling_timesteps,
    timestep_pairs,
)
from .unet import UNet, UNetArch


class DiffusionModel(nn.Module):
    """``Z_ψ`` over images in the internal ``[-1, 1]`` domain."""

    def __init__(self, image_shape: tuple[int, int, int], arch: UNetArch = UNetArch()):
        super().__init__()
        c, h, w = image_shape
        if h != w:
            raise ValueError("square images only")
        self.image_shape = tuple(image_shape)
        self.arch = arch
        self.net = UNet(c, h, arch)

    def forward(self, x_t: Tensor, t: int | Tensor) -> Tensor:
        t = torch.as_tensor(t).reshape(-1).expand(x_t.shape[0])
        return self.net(x_t, t)

    def metadata(self) -> dict:
        return {"image_shape": list(self.image_shape), "arch": self.arch.to_dict(), "data_domain": [-1.0, 1.0]}


def to_model_domain(x: Tensor) -> Tensor:
    return 2.0 * x - 1.0


def from_model_domain(x: Tensor) -> Tensor:
    return (x + 1.0) / 2.0


def ddnm_refine(op: DegradationOperator, x0t: Tensor, x_deg_hat: Tensor) -> Tensor:
    """``A†·x̂_deg + (I − A†A)·x_{0|t}``: keep the null space, replace the range."""
    return op.apply_pinv(x_deg_hat) + op.null_project(x0t)


GeneratorLike = torch.Generator | Sequence[torch.Generator] | None


def _randn(shape, gen: GeneratorLike, dtype) -> Tensor:
    if gen is None or isinstance(gen, torch.Generator):
        return torch.randn(shape, generator=gen, dtype=dtype)
    if len(gen) != shape[0]:
        raise ValueError(f"{len(gen)} generators for a batch of {shape[0]}")
    return torch.stack([torch.randn(shape[1:], generator=g, dtype=dtype) for g in gen])


@torch.no_grad()
def restore(
    model: nn.Module,
    s: NoiseSchedule,
    op: DegradationOperator,
    x_deg_hat: Tensor,
    generator: GeneratorLike = None,
    steps: int = 100,
    travel_length: int = 0,
    travel_repeat: int = 0,
    on_step: Callable[[int, Tensor], None] | None = None,
) -> Tensor:
    """Restore a batch of degraded images ``(B, *op.out_shape)`` in ``[0, 1]``.

    ``generator`` is a single stream for the whole batch or one stream per
    image; the latter makes each output independent of batch composition.
    ``on_step(t, x0_refined)`` sees every refined estimate before any
    clamping.

    The final estimate has its null-space content shrunk per averaging group
    where needed to stay inside the pixel range, which leaves ``A x̂``
    untouched.
    """
    shape = getattr(model, "image_shape", None)
    if shape is not None and tuple(shape) != tuple(op.in_shape):
        raise ValueError(f"model image shape {tuple(shape)} != operator input shape {op.in_shape}")
    if x_deg_hat.dim() != 4 or tuple(x_deg_hat.shape[1:]) != op.out_shape:
        raise ValueError(f"expected (B, {op.out_shape}) degraded images, got {tuple(x_deg_hat.shape)}")
    y = to_model_domain(x_deg_hat)
    dtype = x_deg_hat.dtype
    x = _randn((y.shape[0], *op.in_shape), generator, dtype)
    pairs = timestep_pairs(sampling_timesteps(s, steps), travel_length, travel_repeat)
    for t, t_next in pairs:
        if t_next > t:
            x = renoise(s, x, t, t_next, _randn(x.shape, generator, dtype))
            continue
        eps = model(x, t)
        if not torch.isfinite(eps).all():
            raise NumericalError(f"non-finite noise prediction at t={t}")
        x0t = predict_x0(s, x, t, eps, clamp=True)
        x0h = ddnm_refine(op, x0t, y)
        if on_step is not None:
            on_step(t, x0h)
        if t_next == 0:
            x0h = op.null_shrink(x0h, -1.0, 1.0)
        noise = None if t_next == 0 else _randn(x.shape, generator, dtype)
        x = reverse_sample(s, x, x0h, t, noise=noise, t_prev=t_next)
    return from_model_domain(x.clamp(-1.0, 1.0))
