"""DeepJSCC-Degraded: an SNR-adaptive autoencoder whose decoder targets ``A x``."""

from .model import JsccArch, JsccModel, decode, degraded_mse_loss, encode
from .train import build_model, channel_pass, load_jscc, sample_sigmas, save_jscc, train_jscc

__all__ = [
    "JsccArch",
    "JsccModel",
    "encode",
    "decode",
    "degraded_mse_loss",
    "build_model",
    "channel_pass",
    "sample_sigmas",
    "train_jscc",
    "save_jscc",
    "load_jscc",
]
