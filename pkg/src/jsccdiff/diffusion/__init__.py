"""Toy-scale ε-prediction DDPM and null-space restoration."""

from .restore import DiffusionModel, ddnm_refine, from_model_domain, restore, to_model_domain
from .schedule import (
    NoiseSchedule,
    forward_diffuse,
    make_linear_schedule,
    posterior_coefficients,
    predict_x0,
    renoise,
    reverse_sample,
    sampling_timesteps,
    timestep_pairs,
)
from .train import build_ddpm, diffusion_loss, load_ddpm, save_ddpm, schedule_from_config, train_ddpm
from .unet import UNet, UNetArch

__all__ = [
    "NoiseSchedule",
    "make_linear_schedule",
    "sampling_timesteps",
    "timestep_pairs",
    "forward_diffuse",
    "predict_x0",
    "posterior_coefficients",
    "reverse_sample",
    "renoise",
    "ddnm_refine",
    "restore",
    "to_model_domain",
    "from_model_domain",
    "DiffusionModel",
    "UNet",
    "UNetArch",
    "build_ddpm",
    "diffusion_loss",
    "train_ddpm",
    "save_ddpm",
    "load_ddpm",
    "schedule_from_config",
]
