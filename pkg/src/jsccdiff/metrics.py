"""Distortion and perceptual metrics over images in ``[0, 1]``.

PSNR uses ``peak = 1``; that is the same number as 8-bit PSNR with
``peak = 255`` after exact rescaling.

The perceptual distance is LPIPS-shaped: compare unit-normalized feature
activations layer by layer, average spatially, sum over layers. The default
backbone is a frozen random-convolution pyramid seeded at construction, so
scores are reproducible offline. Published LPIPS weights plug in through
:func:`register_backend` (see ``"lpips"``, which needs the ``lpips``
package).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F
from torch import Tensor

PSNR_PEAK = 1.0


def mse(x: Tensor, x_hat: Tensor) -> float:
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return (x.double() - x_hat.double()).square().mean().item()


def psnr(x: Tensor, x_hat: Tensor, peak: float = PSNR_PEAK) -> float:
    """``10·log10(peak² / MSE)`` over all entries; ``inf`` for identical images."""
    err = mse(x, x_hat)
    if err == 0:
        return math.inf
    return 10 * math.log10(peak**2 / err)


def psnr_batch(x: Tensor, x_hat: Tensor, peak: float = PSNR_PEAK) -> list[float]:
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return [psnr(a, b, peak) for a, b in zip(x, x_hat)]


class RandomConvFeatures(nn.Module):
    """Frozen three-stage conv/ReLU/pool pyramid with seeded random weights."""

    def __init__(self, widths: Sequence[int] = (16, 32, 64), seed: int = 0, in_ch: int = 3):
        super().__init__()
        g = torch.Generator().manual_seed(seed)
        self.convs = nn.ModuleList()
        prev = in_ch
        for w in widths:
            conv = nn.Conv2d(prev, w, 3, padding=1)
            fan_in = prev * 9
            with torch.no_grad():
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=g) * math.sqrt(2.0 / fan_in))
                conv.bias.zero_()
            self.convs.append(conv)
            prev = w
        self.requires_grad_(False)
        self.eval()

    def forward(self, x: Tensor) -> list[Tensor]:
        feats = []
        h = 2.0 * x.float() - 1.0
        for i, conv in enumerate(self.convs):
            if i:
                h = F.avg_pool2d(h, 2)
            h = F.relu(conv(h))
            feats.append(h)
        return feats


def _unit(f: Tensor, eps: float = 1e-10) -> Tensor:
    return f / (f.square().sum(dim=1, keepdim=True).sqrt() + eps)


class FeatureDistance:
    """LPIPS-style distance on top of any ``images -> list[feature maps]`` callable."""

    def __init__(self, features: Callable[[Tensor], list[Tensor]]):
        self.features = features

    @torch.no_grad()
    def __call__(self, x: Tensor, x_hat: Tensor) -> Tensor:
        if x.shape != x_hat.shape:
            raise ValueError(f"shape mismatch {tuple(x.shape)} vs {tuple(x_hat.shape)}")
        single = x.dim() == 3
        if single:
            x, x_hat = x[None], x_hat[None]
        total = torch.zeros(x.shape[0], dtype=torch.float64)
        for fa, fb in zip(self.features(x), self.features(x_hat)):
            total += (_unit(fa) - _unit(fb)).square().sum(dim=1).mean(dim=(-2, -1)).double()
        return total[0] if single else total


def _random_conv_backend(**kwargs) -> Callable[[Tensor, Tensor], Tensor]:
    return FeatureDistance(RandomConvFeatures(**kwargs))


def _lpips_backend(net: str = "alex", **kwargs) -> Callable[[Tensor, Tensor], Tensor]:
    try:
        import lpips  # noqa: PLC0415
    except ImportError as e:
        raise RuntimeError("the 'lpips' backend needs `pip install lpips`") from e
    model = lpips.LPIPS(net=net, verbose=False, **kwargs).eval()

    @torch.no_grad()
    def dist(x: Tensor, x_hat: Tensor) -> Tensor:
        single = x.dim() == 3
        if single:
            x, x_hat = x[None], x_hat[None]
        out = model(x.float(), x_hat.float(), normalize=True).flatten().double()
        return out[0] if single else out

    return dist


_BACKENDS: dict[str, Callable[..., Callable[[Tensor, Tensor], Tensor]]] = {
    "random-conv": _random_conv_backend,
    "lpips": _lpips_backend,
}


def register_backend(name: str, factory: Callable[..., Callable[[Tensor, Tensor], Tensor]]) -> None:
    _BACKENDS[name] = factory


def make_perceptual(backend: str = "random-conv", **kwargs) -> Callable[[Tensor, Tensor], Tensor]:
    try:
        factory = _BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown perceptual backend {backend!r}; known: {sorted(_BACKENDS)}") from None
    return factory(**kwargs)


_default: Callable[[Tensor, Tensor], Tensor] | None = None


def perceptual_distance(x: Tensor, x_hat: Tensor, metric: Callable[[Tensor, Tensor], Tensor] | None = None) -> Tensor:
    """Perceptual distance, per image for batched input. Lower is better."""
    global _default
    if metric is None:
        if _default is None:
            _default = make_perceptual()
        metric = _default
    return metric(x, x_hat)


@dataclass
class MetricReport:
    psnr_db: float
    psnr_std: float
    perceptual: float
    perceptual_std: float
    n: int
    n_inf: int = 0
    peak: float = PSNR_PEAK

    @classmethod
    def from_samples(cls, psnrs: Sequence[float], perceptual: Sequence[float], peak: float = PSNR_PEAK) -> MetricReport:
        p = np.asarray(psnrs, dtype=np.float64)
        finite = p[np.isfinite(p)]
        n_inf = int(len(p) - len(finite))
        if n_inf:
            warnings.warn(f"{n_inf} of {len(p)} reconstructions are exact; excluded from PSNR mean", stacklevel=2)
        q = np.asarray(perceptual, dtype=np.float64)
        return cls(
            psnr_db=float(finite.mean()) if len(finite) else math.inf,
            psnr_std=float(finite.std()) if len(finite) else 0.0,
            perceptual=float(q.mean()),
            perceptual_std=float(q.std()),
            n=len(p),
            n_inf=n_inf,
            peak=peak,
        )
