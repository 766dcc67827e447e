import torch
import torch.nn as nn
from torch import Tensor


def conv3x3(in_ch: int, out_ch: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1)


def conv1x1(in_ch: int, out_ch: int, stride: int = 1) -> nn.Conv2d:
    return nn.Conv2d(in_ch, out_ch, kernel_size=1, stride=stride)


def subpel_conv3x3(in_ch: int, out_ch: int, r: int = 2) -> nn.Sequential:
    return nn.Sequential(nn.Conv2d(in_ch, out_ch * r**2, kernel_size=3, padding=1), nn.PixelShuffle(r))


class ResidualBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__()
        self.conv1 = conv3x3(in_ch, out_ch)
        self.act1 = nn.PReLU()
        self.conv2 = conv3x3(out_ch, out_ch)
        self.act2 = nn.PReLU()
        self.skip = conv1x1(in_ch, out_ch) if in_ch != out_ch else None

    def forward(self, x: Tensor) -> Tensor:
        identity = x if self.skip is None else self.skip(x)
        out = self.act1(self.conv1(x))
        out = self.conv2(out)
        return self.act2(out + identity)


class ResidualBlockWithStride(nn.Module):
    """Residual block that halves the spatial resolution."""

    def __init__(self, in_ch: int, out_ch: int, stride: int = 2):
        super().__init__()
        self.conv1 = conv3x3(in_ch, out_ch, stride=stride)
        self.act1 = nn.PReLU()
        self.conv2 = conv3x3(out_ch, out_ch)
        self.act2 = nn.PReLU()
        self.skip = conv1x1(in_ch, out_ch, stride=stride)

    def forward(self, x: Tensor) -> Tensor:
        out = self.act1(self.conv1(x))
        out = self.conv2(out)
        return self.act2(out + self.skip(x))


class ResidualBlockUpsample(nn.Module):
    """Residual block that doubles the spatial resolution with sub-pixel convs."""

    def __init__(self, in_ch: int, out_ch: int, upsample: int = 2):
        super().__init__()
        self.subpel = subpel_conv3x3(in_ch, out_ch, upsample)
        self.act1 = nn.PReLU()
        self.conv = conv3x3(out_ch, out_ch)
        self.act2 = nn.PReLU()
        self.upsample = subpel_conv3x3(in_ch, out_ch, upsample)

    def forward(self, x: Tensor) -> Tensor:
        out = self.act1(self.subpel(x))
        out = self.conv(out)
        return self.act2(out + self.upsample(x))


class AttentionBlock(nn.Module):
    """Simplified (non-local-free) attention: ``x + a(x) * sigmoid(b(x))``."""

    def __init__(self, ch: int):
        super().__init__()

        class ResUnit(nn.Module):
            def __init__(self):
                super().__init__()
                half = max(ch // 2, 1)
                self.conv = nn.Sequential(
                    conv1x1(ch, half), nn.PReLU(), conv3x3(half, half), nn.PReLU(), conv1x1(half, ch)
                )
                self.act = nn.PReLU()

            def forward(self, x):
                return self.act(x + self.conv(x))

        self.conv_a = nn.Sequential(ResUnit(), ResUnit(), ResUnit())
        self.conv_b = nn.Sequential(ResUnit(), ResUnit(), ResUnit(), conv1x1(ch, ch))

    def forward(self, x: Tensor) -> Tensor:
        return x + self.conv_a(x) * torch.sigmoid(self.conv_b(x))


class AFModule(nn.Module):
    """SNR-adaptive channel gating.

    Global-average-pools the feature map, appends the channel SNR in dB, and
    maps the result through a two-layer MLP to one sigmoid scale per channel.
    """

    def __init__(self, ch: int, hidden: int | None = None):
        super().__init__()
        hidden = hidden or max(ch // 2, 2)
        self.mlp = nn.Sequential(nn.Linear(ch + 1, hidden), nn.ReLU(), nn.Linear(hidden, ch), nn.Sigmoid())

    def forward(self, x: Tensor, snr_db: Tensor) -> Tensor:
        context = torch.cat((x.mean(dim=(-2, -1)), snr_db.reshape(-1, 1).to(x.dtype)), dim=1)
        return x * self.mlp(context)[:, :, None, None]
