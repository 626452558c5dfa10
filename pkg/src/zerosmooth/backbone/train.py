"""Noise-prediction training loop for the toy denoiser."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..diffusion import NoiseSchedule, forward_diffuse
from ..errors import TrainingError
from .data import random_training_example
from .layers import Adam
from .model import BackboneConfig, ToyDenoiser, init_params


@dataclass
class TrainResult:
    model: ToyDenoiser
    initial_heldout: float
    final_heldout: float
    losses: list = field(default_factory=list)


def _heldout_set(config: BackboneConfig, schedule: NoiseSchedule,
                 rng: np.random.Generator, count: int):
    items = []
    for _ in range(count):
        clip, cond = random_training_example(rng, config.t0, config.height,
                                             config.width)
        t = int(rng.integers(1, schedule.num_steps + 1))
        eps = rng.standard_normal(clip.shape)
        items.append((clip, cond, t, eps))
    return items


def heldout_loss(model: ToyDenoiser, schedule: NoiseSchedule, items) -> float:
    total = 0.0
    for clip, cond, t, eps in items:
        z = forward_diffuse(schedule, clip, t, eps)
        pred = model.denoise(z, t, cond)
        total += float(((pred - eps) ** 2).mean())
    return total / len(items)


def train(config: BackboneConfig, schedule: NoiseSchedule, steps: int, *,
          seed: int = 0, lr: float = 2e-3, heldout_count: int = 16,
          log_every: int = 0, dtype=np.float64) -> TrainResult:
    """Train from scratch; fully determined by (config, schedule, steps, seed)."""
    if steps < 1:
        raise TrainingError(f"need at least one training step, got {steps}")
    init_ss, data_ss, held_ss = np.random.SeedSequence(seed).spawn(3)
    model = ToyDenoiser(config, init_params(config, np.random.default_rng(init_ss)))
    if model.params["patch.w"].dtype != np.dtype(dtype):
        model = model.cast(dtype)
    data_rng = np.random.default_rng(data_ss)
    held = _heldout_set(config, schedule, np.random.default_rng(held_ss),
                        heldout_count)
    initial = heldout_loss(model, schedule, held)

    opt = Adam(model.params.keys(), lr=lr)
    losses = []
    for step in range(steps):
        clip, cond = random_training_example(data_rng, config.t0, config.height,
                                             config.width)
        t = int(data_rng.integers(1, schedule.num_steps + 1))
        eps = data_rng.standard_normal(clip.shape)
        z = forward_diffuse(schedule, clip, t, eps)
        try:
            loss, grads = model.loss_and_grads(z, t, eps, cond)
        except TrainingError as exc:
            raise TrainingError(f"training diverged at step {step}: {exc}") from exc
        losses.append(loss)
        opt.update(model.params, grads)
        if log_every and (step + 1) % log_every == 0:
            recent = float(np.mean(losses[-log_every:]))
            print(f"step {step + 1}/{steps}  loss {recent:.4f}")

    final = heldout_loss(model, schedule, held)
    return TrainResult(model, initial, final, losses)
