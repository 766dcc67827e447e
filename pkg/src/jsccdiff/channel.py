"""Complex AWGN channel with average-power normalization.

Symbol blocks are complex tensors of shape ``(..., k)``; every leading index
is an independent block (one per image in a batch). Noise is always drawn
from a caller-owned :class:`torch.Generator` so runs replay bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor

__all__ = [
    "ChannelConfig",
    "bandwidth_ratio",
    "snr_to_sigma",
    "sigma_to_snr",
    "power_normalize",
    "real_to_complex",
    "complex_to_real",
    "awgn_transmit",
    "measured_snr",
]


@dataclass(frozen=True)
class ChannelConfig:
    snr_db: float
    k: int
    P_avg: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.P_avg > 0:
            raise ValueError(f"P_avg must be positive, got {self.P_avg}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if not (math.isfinite(self.noise_var) and self.noise_var > 0):
            raise ValueError(f"snr_db={self.snr_db} gives a degenerate noise variance")

    @property
    def noise_var(self) -> float:
        return self.P_avg / 10 ** (self.snr_db / 10)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.noise_var)

    def generator(self) -> torch.Generator:
        return torch.Generator().manual_seed(self.seed)


def bandwidth_ratio(k: int, shape: tuple[int, int, int]) -> float:
    """Channel symbols per source pixel, ``k / (C·H·W)``."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    c, h, w = shape
    return k / (c * h * w)


def snr_to_sigma(snr_db: float, P_avg: float = 1.0) -> float:
    if not P_avg > 0:
        raise ValueError(f"P_avg must be positive, got {P_avg}")
    if snr_db == math.inf:
        return 0.0
    return math.sqrt(P_avg * 10 ** (-snr_db / 10))


def sigma_to_snr(sigma: float, P_avg: float = 1.0) -> float:
    if sigma == 0:
        return math.inf
    return 10 * math.log10(P_avg / sigma**2)


def power_normalize(z_tilde: Tensor, P_avg: float = 1.0) -> Tensor:
    """Scale each block so that ``(1/k)·‖z‖² = P_avg`` holds with equality.

    Raises:
        ValueError: if any block is identically zero.
    """
    if not torch.is_complex(z_tilde):
        raise TypeError("power_normalize expects complex symbols")
    k = z_tilde.shape[-1]
    energy = z_tilde.abs().square().sum(dim=-1, keepdim=True)
    if bool((energy == 0).any()):
        raise ValueError("cannot normalize an all-zero symbol block")
    return z_tilde * torch.sqrt(k * P_avg / energy)


def real_to_complex(latent: Tensor) -> Tensor:
    """Pair consecutive reals as ``(re, im)``: ``[1, 2, 3, 4] -> [1+2j, 3+4j]``."""
    if latent.shape[-1] % 2:
        raise ValueError(f"need an even number of reals, got {latent.shape[-1]}")
    return torch.complex(latent[..., 0::2], latent[..., 1::2])


def complex_to_real(symbols: Tensor) -> Tensor:
    return torch.stack((symbols.real, symbols.imag), dim=-1).flatten(-2)


def awgn_transmit(z: Tensor, sigma: float | Tensor, generator: torch.Generator | None = None) -> Tensor:
    """Return ``y = z + n`` with ``n ~ CN(0, σ²I)``.

    Real and imaginary noise parts are i.i.d. ``N(0, σ²/2)``. ``sigma`` may be
    a scalar or a tensor broadcastable against ``z[..., :1]`` for per-block
    noise levels.
    """
    sigma = torch.as_tensor(sigma, dtype=z.real.dtype)
    if bool((sigma < 0).any()):
        raise ValueError("sigma must be nonnegative")
    re = torch.randn(z.shape, generator=generator, dtype=z.real.dtype)
    im = torch.randn(z.shape, generator=generator, dtype=z.real.dtype)
    return z + torch.complex(re, im) * (sigma / math.sqrt(2))


def measured_snr(z: Tensor, y: Tensor) -> float:
    """Empirical SNR in dB, ``10·log10(‖z‖² / ‖y − z‖²)``; ``inf`` when ``y == z``."""
    if z.shape != y.shape:
        raise ValueError(f"shape mismatch {tuple(z.shape)} vs {tuple(y.shape)}")
    noise = (y - z).abs().square().sum().item()
    if noise == 0:
        return math.inf
    return 10 * math.log10(z.abs().square().sum().item() / noise)
