"""Noise schedules, diffusion transitions, and the sampling loop.

The schedule keeps per-step alpha_t / sigma_t tables (index 0 is the clean
limit alpha=1, sigma=0) together with the log signal-to-noise ratio
lambda_t = log(alpha_t^2 / sigma_t^2), which must decrease strictly in t.

The sampler does deterministic x0-prediction stepping with optional
eta-scaled stochasticity. All randomness enters through explicitly supplied
per-step noise tensors so callers control frame correspondence. The
variance used for the eta noise follows either the literal backward-process
table ("paper": (1 - e^{lambda_t - lambda_s}) sigma_t^2) or the conventional
form with sigma_s^2 ("standard").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigError,
    DimensionError,
    OrderingError,
    RangeError,
    ScheduleError,
)

POSTERIOR_VAR_MODES = ("paper", "standard")


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step alpha/sigma/lambda tables indexed 0..T (0 = clean limit)."""

    alpha: np.ndarray
    sigma: np.ndarray
    lam: np.ndarray = field(default=None)

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if alpha.shape != sigma.shape or alpha.ndim != 1 or alpha.shape[0] < 2:
            raise ScheduleError("alpha and sigma must be equal-length 1-D tables")
        if np.any(alpha <= 0):
            raise ScheduleError("alpha_t must be positive for every step")
        if np.any(sigma < 0):
            raise ScheduleError("sigma_t must be non-negative")
        with np.errstate(divide="ignore"):
            lam = np.log(alpha**2) - np.log(sigma**2)
        if np.any(np.isnan(lam)):
            raise ScheduleError("lambda table contains NaN")
        # strict monotone decrease over the diffused steps t >= 1
        if np.any(np.diff(lam[1:]) >= 0):
            raise ScheduleError("lambda_t must strictly decrease with t")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "lam", lam)

    @property
    def num_steps(self) -> int:
        return self.alpha.shape[0] - 1

    @classmethod
    def linear_beta(cls, num_steps: int = 1000, beta_start: float = 1e-4,
                    beta_end: float = 0.02) -> "NoiseSchedule":
        """Variance-preserving schedule from a linearly spaced beta table."""
        if num_steps < 1:
            raise ScheduleError(f"need at least one step, got {num_steps}")
        betas = np.linspace(beta_start, beta_end, num_steps, dtype=np.float64)
        abar = np.cumprod(1.0 - betas)
        alpha = np.concatenate([[1.0], np.sqrt(abar)])
        sigma = np.concatenate([[0.0], np.sqrt(1.0 - abar)])
        return cls(alpha, sigma)

    def sampling_steps(self, count: int) -> list[int]:
        """Strictly decreasing timesteps from T down to 1 for sampling."""
        total = self.num_steps
        if not 1 <= count <= total:
            raise ScheduleError(f"cannot stride {total} steps into {count}")
        steps = np.unique(np.round(np.linspace(total, 1, count)).astype(int))[::-1]
        if len(steps) != count:
            raise ScheduleError(f"stride of {count} steps produced duplicates")
        return [int(s) for s in steps]

    def _check_step(self, t: int, lo: int = 1):
        if not lo <= t <= self.num_steps:
            raise RangeError(f"step {t} outside [{lo}, {self.num_steps}]")


def forward_diffuse(schedule: NoiseSchedule, x0: np.ndarray, t: int,
                    eps: np.ndarray) -> np.ndarray:
    """z_t = alpha_t x0 + sigma_t eps."""
    schedule._check_step(t)
    x0 = np.asarray(x0)
    eps = np.asarray(eps)
    if x0.shape != eps.shape:
        raise DimensionError(f"eps shape {eps.shape} != x0 shape {x0.shape}")
    return schedule.alpha[t] * x0 + schedule.sigma[t] * eps


def predict_x0(schedule: NoiseSchedule, z_t: np.ndarray, eps_hat: np.ndarray,
               t: int) -> np.ndarray:
    """Noiseless prediction (z_t - sigma_t eps_hat) / alpha_t."""
    schedule._check_step(t)
    z_t = np.asarray(z_t)
    eps_hat = np.asarray(eps_hat)
    if z_t.shape != eps_hat.shape:
        raise DimensionError(f"eps_hat shape {eps_hat.shape} != z shape {z_t.shape}")
    a = schedule.alpha[t]
    if a == 0:
        raise ScheduleError(f"alpha_{t} is zero; cannot invert")
    return (z_t - schedule.sigma[t] * eps_hat) / a


def posterior_mean_var(schedule: NoiseSchedule, z_t: np.ndarray, x0: np.ndarray,
                       s: int, t: int, mode: str = "paper"):
    """Mean and variance of the backward transition from step t to step s.

    mean = e^{lambda_t - lambda_s} (alpha_s / alpha_t) z_t
           + (1 - e^{lambda_t - lambda_s}) alpha_s x0

    The variance multiplies (1 - e^{lambda_t - lambda_s}) by sigma_t^2 in
    "paper" mode and by sigma_s^2 in "standard" mode.
    """
    if mode not in POSTERIOR_VAR_MODES:
        raise ConfigError(f"posterior_var must be one of {POSTERIOR_VAR_MODES}")
    if s >= t:
        raise OrderingError(f"posterior needs s < t, got s={s}, t={t}")
    schedule._check_step(t)
    schedule._check_step(s, lo=0)
    z_t = np.asarray(z_t)
    x0 = np.asarray(x0)
    if z_t.shape != x0.shape:
        raise DimensionError(f"x0 shape {x0.shape} != z shape {z_t.shape}")
    lam_t, lam_s = schedule.lam[t], schedule.lam[s]
    factor = 0.0 if np.isinf(lam_s) else float(np.exp(lam_t - lam_s))
    alpha_s, alpha_t = schedule.alpha[s], schedule.alpha[t]
    mean = factor * (alpha_s / alpha_t) * z_t + (1.0 - factor) * alpha_s * x0
    sig2 = schedule.sigma[t] ** 2 if mode == "paper" else schedule.sigma[s] ** 2
    var = (1.0 - factor) * sig2
    return mean, float(var)


def sample(denoiser, schedule: NoiseSchedule, init_noise: np.ndarray,
           steps, *, cond=None, eta: float = 0.0, step_noises=None,
           posterior_var: str = "paper", clip_x0: bool = False,
           x0_hook=None, z_hook=None) -> np.ndarray:
    """Run the denoising loop and return the final noiseless prediction.

    `steps` is a strictly decreasing list of timesteps; the state starts at
    init_noise (taken as z at steps[0]). When eta > 0, step_noises must
    supply one tensor per transition. x0_hook(i, t, x0) may replace the
    prediction after each step (return None to keep it); z_hook(i, s, z)
    likewise for the stepped state. The result is the x0 prediction of the
    final step, after its hook.
    """
    steps = [int(t) for t in steps]
    if not steps:
        raise ConfigError("need at least one sampling step")
    for a, b in zip(steps, steps[1:]):
        if b >= a:
            raise OrderingError(f"sampling steps must strictly decrease, got {a} -> {b}")
    if eta < 0:
        raise ConfigError(f"eta must be non-negative, got {eta}")
    if eta > 0 and (step_noises is None or len(step_noises) < len(steps) - 1):
        raise ConfigError("eta > 0 requires one step noise per transition")

    z = np.asarray(init_noise)
    for i, t in enumerate(steps):
        eps_hat = np.asarray(denoiser(z, t, cond))
        if eps_hat.shape != z.shape:
            raise DimensionError(
                f"denoiser returned shape {eps_hat.shape}, expected {z.shape}"
            )
        x0 = predict_x0(schedule, z, eps_hat, t)
        if clip_x0:
            x0 = np.clip(x0, 0.0, 1.0)
        if x0_hook is not None:
            replaced = x0_hook(i, t, x0)
            if replaced is not None:
                x0 = replaced
        if i == len(steps) - 1:
            return x0
        s = steps[i + 1]
        alpha_s, sigma_s = schedule.alpha[s], schedule.sigma[s]
        if eta > 0:
            _, pv = posterior_mean_var(schedule, z, x0, s, t, mode=posterior_var)
            noise_var = min((eta**2) * pv, float(sigma_s) ** 2)
            direction = np.sqrt(max(sigma_s**2 - noise_var, 0.0))
            z = (alpha_s * x0 + direction * eps_hat
                 + np.sqrt(noise_var) * np.asarray(step_noises[i]))
        else:
            z = alpha_s * x0 + sigma_s * eps_hat
        if z_hook is not None:
            replaced = z_hook(i, s, z)
            if replaced is not None:
                z = replaced
    raise AssertionError("unreachable")
