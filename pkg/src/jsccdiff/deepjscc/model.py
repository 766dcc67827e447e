"""SNR-conditioned convolutional autoencoder that transmits ``A x``."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn as nn
from torch import Tensor

from ..channel import awgn_transmit, complex_to_real, power_normalize, real_to_complex, sigma_to_snr
from ..linops import DegradationOperator, OperatorKind
from .layers import (
    AFModule,
    AttentionBlock,
    ResidualBlock,
    ResidualBlockUpsample,
    ResidualBlockWithStride,
    conv3x3,
)

# range of SNR values fed to the gating MLPs; sigma=0 maps to the upper end
SNR_CONDITION_RANGE = (-20.0, 40.0)


@dataclass(frozen=True)
class JsccArch:
    base_filters: int = 128
    n_down: int = 3
    c_out: int = 2
    attention: bool = True
    # recorded in checkpoints; the layers currently hard-wire these choices
    nonlinearity: str = "prelu"
    normalization: str = "none"
    init: str = "torch-default"
    output: str = "sigmoid"

    def to_dict(self) -> dict:
        return asdict(self)


def _upsample_stages(arch: JsccArch, op: DegradationOperator) -> int:
    if op.kind is not OperatorKind.AVG_POOL or op.factor == 1:
        return arch.n_down
    m = int(round(math.log2(op.factor)))
    if 2**m != op.factor or m > arch.n_down:
        raise ValueError(f"pooling factor {op.factor} needs to be a power of two <= 2**n_down")
    return arch.n_down - m


class Encoder(nn.Module):
    def __init__(self, in_ch: int, arch: JsccArch):
        super().__init__()
        f = arch.base_filters
        self.stages = nn.ModuleList()
        self.gates = nn.ModuleList()
        ch = in_ch
        for _ in range(arch.n_down):
            self.stages.append(nn.Sequential(ResidualBlockWithStride(ch, f), ResidualBlock(f, f)))
            self.gates.append(AFModule(f))
            ch = f
        self.attention = AttentionBlock(f) if arch.attention else nn.Identity()
        self.head = conv3x3(f, arch.c_out)

    def forward(self, x: Tensor, snr: Tensor) -> Tensor:
        for stage, gate in zip(self.stages, self.gates):
            x = gate(stage(x), snr)
        return self.head(self.attention(x))


class Decoder(nn.Module):
    """Mirror of the encoder whose first ``log2(factor)`` upsampling stages are
    plain residual blocks, so the output lands at the degraded resolution."""

    def __init__(self, out_ch: int, arch: JsccArch, n_up: int):
        super().__init__()
        f = arch.base_filters
        self.tail = nn.Sequential(conv3x3(arch.c_out, f), nn.PReLU())
        self.attention = AttentionBlock(f) if arch.attention else nn.Identity()
        n_plain = arch.n_down - n_up
        self.stages = nn.ModuleList()
        self.gates = nn.ModuleList()
        for i in range(arch.n_down):
            up = ResidualBlock(f, f) if i < n_plain else ResidualBlockUpsample(f, f)
            self.stages.append(nn.Sequential(ResidualBlock(f, f), up))
            self.gates.append(AFModule(f))
        self.head = conv3x3(f, out_ch)

    def forward(self, z: Tensor, snr: Tensor) -> Tensor:
        x = self.attention(self.tail(z))
        for stage, gate in zip(self.stages, self.gates):
            x = gate(stage(x), snr)
        return self.head(x)


class JsccModel(nn.Module):
    """Encoder ``E_Θ`` and decoder ``D_Φ`` trained against a known operator.

    With an ``identity`` operator this is plain DeepJSCC: the decoder
    reconstructs the full-resolution input.
    """

    def __init__(self, op: DegradationOperator, arch: JsccArch = JsccArch(), P_avg: float = 1.0):
        super().__init__()
        c, h, w = op.in_shape
        scale = 2**arch.n_down
        if h % scale or w % scale:
            raise ValueError(f"image size {(h, w)} not divisible by 2**n_down={scale}")
        if (arch.c_out * (h // scale) * (w // scale)) % 2:
            raise ValueError("encoder emits an odd number of reals; pick an even c_out")
        self.op = op
        self.arch = arch
        self.P_avg = P_avg
        self.encoder = Encoder(c, arch)
        self.decoder = Decoder(op.out_shape[0], arch, _upsample_stages(arch, op))
        self.latent_shape = (arch.c_out, h // scale, w // scale)

    @property
    def k(self) -> int:
        c, h, w = self.latent_shape
        return c * h * w // 2

    @property
    def rho(self) -> float:
        c, h, w = self.op.in_shape
        return self.k / (c * h * w)

    def snr_condition(self, sigma: float | Tensor, batch: int) -> Tensor:
        sigma = torch.as_tensor(sigma, dtype=torch.float64).reshape(-1).expand(batch)
        snr = [sigma_to_snr(float(s), self.P_avg) for s in sigma]
        return torch.tensor(snr).clamp(*SNR_CONDITION_RANGE) / 10.0

    def encode(self, x: Tensor, sigma: float | Tensor) -> Tensor:
        """Map a batch of images in [0, 1] to ``(B, 2k)`` real channel inputs."""
        if x.dim() != 4 or tuple(x.shape[1:]) != self.op.in_shape:
            raise ValueError(f"encode: expected (B, {self.op.in_shape}), got {tuple(x.shape)}")
        snr = self.snr_condition(sigma, x.shape[0]).to(x.dtype)
        return self.encoder(x, snr).flatten(1)

    def decode(self, y: Tensor, sigma: float | Tensor) -> Tensor:
        """Reconstruct the degraded image from ``(B, k)`` complex channel outputs."""
        if y.dim() != 2 or y.shape[1] != self.k:
            raise ValueError(f"decode: expected (B, {self.k}) symbols, got {tuple(y.shape)}")
        real = complex_to_real(y) if torch.is_complex(y) else y
        z = real.reshape(-1, *self.latent_shape)
        snr = self.snr_condition(sigma, z.shape[0]).to(z.dtype)
        # sigmoid rather than a clamp: a clamp stops gradients for out-of-range pixels
        return torch.sigmoid(self.decoder(z, snr))

    def forward(self, x: Tensor, sigma: float | Tensor, generator: torch.Generator | None = None) -> Tensor:
        z = power_normalize(real_to_complex(self.encode(x, sigma)), self.P_avg)
        sig = torch.as_tensor(sigma, dtype=z.real.dtype).reshape(-1, 1)
        y = awgn_transmit(z, sig, generator)
        return self.decode(y, sigma)

    def metadata(self) -> dict:
        return {
            "arch": self.arch.to_dict(),
            "operator": self.op.to_dict(),
            "P_avg": self.P_avg,
            "k": self.k,
            "rho": self.rho,
        }


def encode(model: JsccModel, x: Tensor, sigma: float | Tensor) -> Tensor:
    return model.encode(x, sigma)


def decode(model: JsccModel, y: Tensor, sigma: float | Tensor) -> Tensor:
    return model.decode(y, sigma)


def degraded_mse_loss(op: DegradationOperator, x: Tensor, x_deg_hat: Tensor) -> Tensor:
    """``‖A x − x̂_deg‖² / (C·H·W)``, normalized by the *input* size.

    Batched inputs return the mean over the batch.
    """
    target = op.apply(x)
    if target.shape != x_deg_hat.shape:
        raise ValueError(f"shape mismatch: A x is {tuple(target.shape)}, x_deg_hat is {tuple(x_deg_hat.shape)}")
    sq = (target - x_deg_hat).square()
    if x.dim() == 3:
        return sq.sum() / op.in_dim
    return sq.flatten(1).sum(dim=1).mean() / op.in_dim
