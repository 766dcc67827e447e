from __future__ import annotations

import copy
import logging
import math
from pathlib import Path

import torch
from torch import Tensor

from ..channel import awgn_transmit, power_normalize, real_to_complex, snr_to_sigma
from ..checkpoints import read_checkpoint, save_checkpoint
from ..config import ExperimentConfig
from ..errors import NumericalError
from ..linops import DegradationOperator, make_operator
from .model import JsccArch, JsccModel, degraded_mse_loss

log = logging.getLogger(__name__)

# fixed seed offset for the validation noise/SNR stream, so every epoch's
# validation loss is measured on the same channel realization
_VAL_STREAM = 7919


def sample_sigmas(n: int, snr_range, P_avg: float, generator: torch.Generator) -> Tensor:
    """One SNR per instance, uniform in dB over ``snr_range``."""
    lo, hi = snr_range
    snr = lo + (hi - lo) * torch.rand(n, generator=generator, dtype=torch.float64)
    return torch.tensor([snr_to_sigma(float(s), P_avg) for s in snr])


def channel_pass(model: JsccModel, x: Tensor, sigma: Tensor, generator: torch.Generator) -> Tensor:
    """encode -> power_normalize -> awgn_transmit -> decode, as used in training."""
    z = power_normalize(real_to_complex(model.encode(x, sigma)), model.P_avg)
    y = awgn_transmit(z, sigma.to(z.real.dtype).reshape(-1, 1), generator)
    return model.decode(y, sigma)


def evaluate_loss(model: JsccModel, data: Tensor, snr_range, batch: int, seed: int) -> float:
    g = torch.Generator().manual_seed(seed)
    total, n = 0.0, 0
    model.eval()
    with torch.no_grad():
        for i in range(0, len(data), batch):
            x = data[i : i + batch]
            sigma = sample_sigmas(len(x), snr_range, model.P_avg, g)
            loss = degraded_mse_loss(model.op, x, channel_pass(model, x, sigma, g))
            total += loss.item() * len(x)
            n += len(x)
    return total / n


def build_model(cfg: ExperimentConfig, op: DegradationOperator | None = None) -> JsccModel:
    op = op or make_operator(cfg.operator.kind, cfg.image_shape, cfg.operator.factor)
    arch = JsccArch(
        base_filters=cfg.jscc.base_filters,
        n_down=cfg.jscc.n_down,
        c_out=cfg.jscc.c_out,
        attention=cfg.jscc.attention,
    )
    return JsccModel(op, arch, P_avg=cfg.channel.P_avg)


def train_jscc(
    cfg: ExperimentConfig,
    train: Tensor,
    val: Tensor,
    op: DegradationOperator | None = None,
    max_epochs: int | None = None,
) -> tuple[JsccModel, list[dict]]:
    """Train a DeepJSCC-Degraded model with early stopping on validation MSE.

    Each instance gets its own SNR drawn uniformly from ``cfg.jscc.snr_range``.
    Returns the best-validation model and the per-epoch history; entry 0 is
    the untrained model.

    Raises:
        NumericalError: if the training loss becomes NaN or infinite.
    """
    if len(train) == 0 or len(val) == 0:
        raise ValueError("train and val sets must be nonempty")
    jc = cfg.jscc
    torch.manual_seed(jc.seed)
    model = build_model(cfg, op)
    opt = torch.optim.Adam(model.parameters(), lr=jc.lr)
    g = torch.Generator().manual_seed(jc.seed)
    max_epochs = jc.max_epochs if max_epochs is None else max_epochs

    best = evaluate_loss(model, val, jc.snr_range, jc.batch, jc.seed + _VAL_STREAM)
    best_state = copy.deepcopy(model.state_dict())
    history = [{"epoch": 0, "train_loss": None, "val_loss": best}]
    stale = 0
    for epoch in range(1, max_epochs + 1):
        model.train()
        order = torch.randperm(len(train), generator=g)
        running, seen = 0.0, 0
        for i in range(0, len(train), jc.batch):
            x = train[order[i : i + jc.batch]]
            sigma = sample_sigmas(len(x), jc.snr_range, model.P_avg, g)
            loss = degraded_mse_loss(model.op, x, channel_pass(model, x, sigma, g))
            if not math.isfinite(loss.item()):
                raise NumericalError(f"JSCC loss became {loss.item()} at epoch {epoch}, batch {i // jc.batch}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            running += loss.item() * len(x)
            seen += len(x)
        val_loss = evaluate_loss(model, val, jc.snr_range, jc.batch, jc.seed + _VAL_STREAM)
        history.append({"epoch": epoch, "train_loss": running / seen, "val_loss": val_loss})
        log.info("jscc epoch %d train %.5f val %.5f", epoch, running / seen, val_loss)
        if val_loss < best:
            best, stale = val_loss, 0
            best_state = copy.deepcopy(model.state_dict())
        else:
            stale += 1
            if stale >= jc.patience:
                log.info("early stop after %d epochs without improvement", stale)
                break
    model.load_state_dict(best_state)
    model.eval()
    return model, history


def save_jscc(path: str | Path, model: JsccModel, cfg: ExperimentConfig | None = None, history=None) -> Path:
    seeds = {"jscc": cfg.jscc.seed, "split": cfg.split_seed} if cfg else {}
    return save_checkpoint(
        path,
        "jscc",
        model.metadata(),
        model.state_dict(),
        train_config=cfg.to_dict() if cfg else None,
        seeds=seeds,
        history=history,
    )


def load_jscc(path: str | Path) -> JsccModel:
    payload = read_checkpoint(path, kind="jscc")
    meta = payload["model"]
    model = JsccModel(DegradationOperator.from_dict(meta["operator"]), JsccArch(**meta["arch"]), meta["P_avg"])
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model
