"""Noise schedules and the closed-form DDPM algebra.

Timesteps are 1-based, ``t ∈ [1, T]``, with the convention ``ᾱ_0 = 1``.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import Tensor


@dataclass(frozen=True)
class NoiseSchedule:
    beta: Tensor  # float64, shape (T,); beta[t-1] is β_t
    alpha_bar: Tensor  # float64, shape (T,)
    beta_start: float
    beta_end: float

    @property
    def T(self) -> int:
        return int(self.beta.numel())

    def abar(self, t: int) -> float:
        """``ᾱ_t`` with ``ᾱ_0 = 1``."""
        if not 0 <= t <= self.T:
            raise ValueError(f"timestep {t} outside [0, {self.T}]")
        return 1.0 if t == 0 else float(self.alpha_bar[t - 1])

    def to_dict(self) -> dict:
        return {"T": self.T, "schedule": "linear", "beta_start": self.beta_start, "beta_end": self.beta_end}


def make_linear_schedule(T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if T == 1:
        if not 0 < beta_start < 1:
            raise ValueError(f"invalid beta range ({beta_start}, {beta_end})")
    elif not 0 < beta_start < beta_end < 1:
        raise ValueError(f"need 0 < beta_start < beta_end < 1, got ({beta_start}, {beta_end})")
    beta = torch.linspace(beta_start, beta_end, T, dtype=torch.float64)
    return NoiseSchedule(beta, torch.cumprod(1.0 - beta, dim=0), beta_start, beta_end)


def sampling_timesteps(s: NoiseSchedule, n: int) -> list[int]:
    """``n`` uniformly strided timesteps, strictly decreasing from ``T``.

    With ``T=1000, n=100`` this is ``[1000, 990, ..., 10]``.
    """
    if not 1 <= n <= s.T:
        raise ValueError(f"sampling steps must lie in [1, {s.T}], got {n}")
    return [int(round(s.T - i * s.T / n)) for i in range(n)]


def timestep_pairs(ts: list[int], travel_length: int = 0, travel_repeat: int = 0) -> list[tuple[int, int]]:
    """Consecutive ``(t, t_next)`` transitions ending at ``t_next = 0``.

    With time travel enabled, every ``travel_length`` steps the walk jumps
    back up by ``travel_length`` positions, ``travel_repeat`` times, before
    moving on. Upward transitions (``t_next > t``) mean re-noising.
    """
    seq = list(ts) + [0]
    if travel_length <= 0 or travel_repeat <= 0:
        return list(zip(seq[:-1], seq[1:]))
    walk = [seq[0]]
    jumps: dict[int, int] = {}
    i = 0
    while i < len(seq) - 1:
        i += 1
        walk.append(seq[i])
        if i < len(seq) - 1 and i >= travel_length and i % travel_length == 0 and jumps.get(i, 0) < travel_repeat:
            jumps[i] = jumps.get(i, 0) + 1
            i -= travel_length
            walk.append(seq[i])
    return list(zip(walk[:-1], walk[1:]))


def _check_t(s: NoiseSchedule, t: int) -> None:
    if not 1 <= t <= s.T:
        raise ValueError(f"timestep {t} outside [1, {s.T}]")


def forward_diffuse(s: NoiseSchedule, x0: Tensor, t: int, eps: Tensor) -> Tensor:
    """``x_t = √ᾱ_t·x0 + √(1−ᾱ_t)·ε``."""
    _check_t(s, t)
    a = s.abar(t)
    return a**0.5 * x0 + (1 - a) ** 0.5 * eps


def predict_x0(s: NoiseSchedule, x_t: Tensor, t: int, eps_hat: Tensor, clamp: bool = False) -> Tensor:
    """Invert the forward step given a noise estimate: ``(x_t − √(1−ᾱ_t)·ε̂) / √ᾱ_t``."""
    _check_t(s, t)
    a = s.abar(t)
    if a <= 0:
        raise ZeroDivisionError(f"alpha_bar vanishes at t={t}")
    x0 = (x_t - (1 - a) ** 0.5 * eps_hat) / a**0.5
    return x0.clamp(-1.0, 1.0) if clamp else x0


def posterior_coefficients(s: NoiseSchedule, t: int, t_prev: int | None = None) -> tuple[float, float, float]:
    """Mean coefficients and variance of ``q(x_{t_prev} | x_t, x0)``.

    Returns ``(c_x0, c_xt, var)`` with mean ``c_x0·x0 + c_xt·x_t``. ``t_prev``
    defaults to ``t − 1``; any ``0 <= t_prev < t`` is allowed for strided
    sampling.
    """
    _check_t(s, t)
    t_prev = t - 1 if t_prev is None else t_prev
    if not 0 <= t_prev < t:
        raise ValueError(f"t_prev={t_prev} must lie in [0, {t})")
    a_t, a_p = s.abar(t), s.abar(t_prev)
    alpha = a_t / a_p
    beta = 1 - alpha
    c_x0 = a_p**0.5 * beta / (1 - a_t)
    c_xt = alpha**0.5 * (1 - a_p) / (1 - a_t)
    var = (1 - a_p) / (1 - a_t) * beta
    return c_x0, c_xt, var


def reverse_sample(
    s: NoiseSchedule,
    x_t: Tensor,
    x0_hat: Tensor,
    t: int,
    noise: Tensor | None = None,
    t_prev: int | None = None,
    generator: torch.Generator | None = None,
) -> Tensor:
    """Draw ``x_{t_prev} ~ N(μ̃(x_t, x̂0), β̃_t I)``.

    ``noise`` supplies the standard-normal draw explicitly; otherwise it comes
    from ``generator``. The final transition to ``t_prev = 0`` has zero
    variance and returns the posterior mean.
    """
    c_x0, c_xt, var = posterior_coefficients(s, t, t_prev)
    mean = c_x0 * x0_hat + c_xt * x_t
    if var == 0:
        return mean
    if noise is None:
        noise = torch.randn(x_t.shape, generator=generator, dtype=x_t.dtype)
    return mean + var**0.5 * noise


def renoise(s: NoiseSchedule, x_t: Tensor, t: int, t_next: int, noise: Tensor) -> Tensor:
    """Forward-diffuse from ``t`` up to ``t_next > t`` (time travel)."""
    alpha = s.abar(t_next) / s.abar(t)
    return alpha**0.5 * x_t + (1 - alpha) ** 0.5 * noise
