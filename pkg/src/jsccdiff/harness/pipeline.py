from __future__ import annotations

import numpy as np
import torch
from torch import Tensor

from ..channel import awgn_transmit, power_normalize, real_to_complex, snr_to_sigma
from ..deepjscc import JsccModel
from ..diffusion import DiffusionModel, NoiseSchedule, restore
from ..diffusion.restore import GeneratorLike
from ..linops import DegradationOperator


def stream(seed: int, *key: int) -> torch.Generator:
    """A torch generator for the sub-stream ``key`` of master ``seed``."""
    state = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)).generate_state(2, dtype=np.uint32)
    return torch.Generator().manual_seed(int(state[0]) << 32 | int(state[1]))


def _transmit(z: Tensor, sigma: float, generator: GeneratorLike) -> Tensor:
    if generator is None or isinstance(generator, torch.Generator):
        return awgn_transmit(z, sigma, generator)
    return torch.stack([awgn_transmit(zi, sigma, g) for zi, g in zip(z, generator)])


@torch.no_grad()
def receive_degraded(jscc: JsccModel, x: Tensor, snr_db: float, generator: GeneratorLike = None) -> Tensor:
    """Transmitter and channel half of the pipeline: returns ``x̂_deg``."""
    sigma = snr_to_sigma(snr_db, jscc.P_avg)
    z = power_normalize(real_to_complex(jscc.encode(x, sigma)), jscc.P_avg)
    y = _transmit(z, sigma, generator)
    return jscc.decode(y, sigma)


@torch.no_grad()
def transmit_pipeline(
    x: Tensor,
    jscc: JsccModel,
    ddpm: DiffusionModel | None,
    op: DegradationOperator,
    snr_db: float,
    generator: GeneratorLike = None,
    schedule: NoiseSchedule | None = None,
    steps: int = 100,
    restore_generator: GeneratorLike = None,
    travel_length: int = 0,
    travel_repeat: int = 0,
) -> tuple[Tensor, Tensor]:
    """Encode, normalize, send over AWGN, decode, then restore.

    Returns ``(x̂_deg, x̂)``. Without a diffusion model the restoration is the
    pseudo-inverse upsample ``A† x̂_deg``. ``snr_db = inf`` is a noiseless
    channel. ``restore_generator`` defaults to ``generator``, continuing the
    same stream after the channel draw.
    """
    single = x.dim() == 3
    if single:
        x = x[None]
    if jscc.op != op:
        raise ValueError(f"JSCC model was trained for {jscc.op}, pipeline got {op}")
    x_deg_hat = receive_degraded(jscc, x, snr_db, generator)
    if ddpm is None:
        x_hat = op.apply_pinv(x_deg_hat)
    else:
        if schedule is None:
            raise ValueError("a noise schedule is required with a diffusion model")
        gen = generator if restore_generator is None else restore_generator
        x_hat = restore(ddpm, schedule, op, x_deg_hat, gen, steps, travel_length, travel_repeat)
    if single:
        return x_deg_hat[0], x_hat[0]
    return x_deg_hat, x_hat
