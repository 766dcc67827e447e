"""Diffusion-aided deep joint source-channel coding at desk scale.

An SNR-adaptive autoencoder sends a known-degraded (2x mean-pooled) image
over a power-constrained complex AWGN channel; the receiver restores the
full-resolution image by letting a DDPM fill in the null space of the
degradation while the range space stays pinned to what was received.
"""

__version__ = "0.1.0"
