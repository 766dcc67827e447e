from __future__ import annotations

import copy
import logging
import math
from pathlib import Path

import torch
from torch import Tensor

from ..checkpoints import read_checkpoint, save_checkpoint
from ..config import ExperimentConfig
from ..errors import NumericalError
from .restore import DiffusionModel, to_model_domain
from .schedule import NoiseSchedule, make_linear_schedule
from .unet import UNetArch

log = logging.getLogger(__name__)


def schedule_from_config(cfg: ExperimentConfig) -> NoiseSchedule:
    d = cfg.diffusion
    return make_linear_schedule(d.T, d.beta_start, d.beta_end)


def build_ddpm(cfg: ExperimentConfig) -> DiffusionModel:
    d = cfg.diffusion
    arch = UNetArch(base_channels=d.base_channels, channel_mult=tuple(d.channel_mult), attention_res=tuple(d.attention_res))
    return DiffusionModel(cfg.image_shape, arch)


def diffusion_loss(model: DiffusionModel, s: NoiseSchedule, x0: Tensor, generator: torch.Generator) -> Tensor:
    """``‖ε − Z_ψ(x_t, t)‖²`` per pixel, ``t ~ U{1..T}``, ``ε ~ N(0, I)``."""
    b = x0.shape[0]
    t = torch.randint(1, s.T + 1, (b,), generator=generator)
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    abar = s.alpha_bar[t - 1].to(x0.dtype)[:, None, None, None]
    x_t = abar.sqrt() * x0 + (1 - abar).sqrt() * eps
    return (model.net(x_t, t) - eps).square().mean()


def train_ddpm(
    cfg: ExperimentConfig, data: Tensor, epochs: int | None = None
) -> tuple[DiffusionModel, list[dict]]:
    """Train ``Z_ψ`` on clean images in ``[0, 1]`` with random horizontal flips.

    Returns the EMA weights from the epoch with the lowest mean training loss
    and the per-epoch history.

    Raises:
        NumericalError: if the loss becomes NaN or infinite.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    d = cfg.diffusion
    torch.manual_seed(d.seed)
    s = schedule_from_config(cfg)
    model = build_ddpm(cfg)
    ema = copy.deepcopy(model).requires_grad_(False)
    opt = torch.optim.Adam(model.parameters(), lr=d.lr)
    g = torch.Generator().manual_seed(d.seed)
    x_all = to_model_domain(data)
    epochs = d.epochs if epochs is None else epochs

    history, best, best_state = [], math.inf, copy.deepcopy(ema.state_dict())
    step = 0
    for epoch in range(1, epochs + 1):
        model.train()
        order = torch.randperm(len(x_all), generator=g)
        running, seen = 0.0, 0
        for i in range(0, len(x_all), d.batch):
            x0 = x_all[order[i : i + d.batch]]
            flip = torch.rand(len(x0), generator=g) < 0.5
            x0 = torch.where(flip[:, None, None, None], x0.flip(-1), x0)
            loss = diffusion_loss(model, s, x0, g)
            if not math.isfinite(loss.item()):
                raise NumericalError(f"DDPM loss became {loss.item()} at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            step += 1
            # warm-up keeps early EMA from averaging in the random init
            decay = min(d.ema_decay, (1 + step) / (10 + step))
            with torch.no_grad():
                for pe, pm in zip(ema.parameters(), model.parameters()):
                    pe.lerp_(pm, 1 - decay)
            running += loss.item() * len(x0)
            seen += len(x0)
        epoch_loss = running / seen
        history.append({"epoch": epoch, "train_loss": epoch_loss})
        log.info("ddpm epoch %d loss %.5f", epoch, epoch_loss)
        if epoch_loss < best:
            best = epoch_loss
            best_state = copy.deepcopy(ema.state_dict())
    ema.load_state_dict(best_state)
    ema.eval()
    return ema, history


def save_ddpm(path: str | Path, model: DiffusionModel, cfg: ExperimentConfig | None = None, history=None) -> Path:
    meta = model.metadata()
    if cfg is not None:
        meta["schedule"] = schedule_from_config(cfg).to_dict()
    return save_checkpoint(
        path,
        "ddpm",
        meta,
        model.state_dict(),
        train_config=cfg.to_dict() if cfg else None,
        seeds={"ddpm": cfg.diffusion.seed} if cfg else {},
        history=history,
    )


def load_ddpm(path: str | Path) -> tuple[DiffusionModel, NoiseSchedule | None]:
    payload = read_checkpoint(path, kind="ddpm")
    meta = payload["model"]
    a = meta["arch"]
    arch = UNetArch(
        base_channels=a["base_channels"],
        channel_mult=tuple(a["channel_mult"]),
        num_res_blocks=a["num_res_blocks"],
        attention_res=tuple(a["attention_res"]),
        groups=a["groups"],
    )
    model = DiffusionModel(tuple(meta["image_shape"]), arch)
    model.load_state_dict(payload["state_dict"])
    model.eval().requires_grad_(False)
    sched = meta.get("schedule")
    s = make_linear_schedule(sched["T"], sched["beta_start"], sched["beta_end"]) if sched else None
    return model, s
