"""Self-cascaded sampling: base run, corrected upsampling stages, baselines.

One seed determines every stage: Gaussian noise is drawn once at the finest
frame count and each stage takes every n^(N-s)-th frame of it, so a frame
and its key-frame ancestor always carry identical noise at every denoising
step. Stage 1 samples at t0 while recording hidden states; stage s > 1
samples at n^(s-1) * t0 with correction hooks fed from stage s-1's cache.
The direct-inference and latent back-projection baselines share the same
noise machinery so comparisons differ only in the mechanism under test.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .correction import BranchSelector, CorrectionSchedule, HiddenCache, StageHooks
from .diffusion import NoiseSchedule, sample
from .errors import ConfigError, DimensionError, RangeError
from .numerics import channel_stats
from .operators import build_sampling, back_project, extract_key_frames
from .window_attention import WINDOW_MODES

ADAIN_EPS = 1e-6
ADAIN_TARGETS = ("x0", "z")
NOISE_MODES = ("repeat", "iid")
DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class CascadeConfig:
    stages: int = 2
    scale: int = 2
    t0: int = 8
    control_coeff: float = 0.8
    fps: float = 8.0
    class_id: int = 0
    selector: str = "gaussian"
    windowing: str = "overlap"
    color_correction: bool = True
    adain_target: str = "x0"
    posterior_var: str = "paper"
    eta: float = 1.0
    clip_x0: bool = True
    temporal_correction: bool = True
    spatial_correction: bool = True
    spatial_kv: str = "interp"
    ccs: bool = True
    guidance_lo: float = 1.0
    guidance_hi: float = 3.0
    sample_steps: int = 50
    dtype: str = "float32"
    noise_mode: str = "repeat"

    def __post_init__(self):
        if self.stages < 1:
            raise ConfigError(f"need at least one stage, got {self.stages}")
        if self.scale < 2:
            raise ConfigError(f"interpolation scale must be >= 2, got {self.scale}")
        if self.windowing not in WINDOW_MODES:
            raise ConfigError(f"windowing must be one of {WINDOW_MODES}")
        if self.adain_target not in ADAIN_TARGETS:
            raise ConfigError(f"adain_target must be one of {ADAIN_TARGETS}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {tuple(DTYPES)}")
        if self.fps <= 0:
            raise ConfigError(f"fps must be positive, got {self.fps}")
        if self.noise_mode not in NOISE_MODES:
            raise ConfigError(f"noise_mode must be one of {NOISE_MODES}")

    @property
    def final_frames(self) -> int:
        return self.scale ** (self.stages - 1) * self.t0

    def stage_frames(self, stage: int) -> int:
        return self.scale ** (stage - 1) * self.t0


@dataclass
class StageResult:
    stage: int
    video: np.ndarray
    cache: HiddenCache | None
    fps: float
    guidance: np.ndarray
    metrics: dict = field(default_factory=dict)


def correspond_noise(finest: np.ndarray, stage: int, scale: int,
                     stages: int) -> np.ndarray:
    """Stage-`stage` noise: frame i carries finest-stage frame i * n^(N-s)."""
    if not 1 <= stage <= stages:
        raise RangeError(f"stage {stage} outside [1, {stages}]")
    stride = scale ** (stages - stage)
    return np.asarray(finest)[::stride].copy()


def scale_fps(base_fps: float, stage_scale: int) -> float:
    """Frame-rate conditioning for a stage running stage_scale times faster."""
    if base_fps <= 0:
        raise ConfigError(f"fps must be positive, got {base_fps}")
    return base_fps * stage_scale


def interp_guidance(g_lo: float, g_hi: float, t_frames: int) -> np.ndarray:
    """Per-frame guidance scales: endpoints pinned, interior linear."""
    if t_frames < 2:
        raise RangeError(f"guidance interpolation needs >= 2 frames, got {t_frames}")
    return np.linspace(g_lo, g_hi, t_frames)


def nearest_key_index(frame: int, scale: int, t0: int) -> int:
    """Nearest key slot for a frame, preferring the earlier key on ties."""
    lo = frame // scale
    hi = min(lo + 1, t0 - 1)
    if frame - lo * scale <= hi * scale - frame:
        return lo
    return hi


def color_tone_correct(video: np.ndarray, key_video: np.ndarray,
                       sampling_map) -> np.ndarray:
    """Match each frame's per-channel mean/std to its nearest key frame.

    Key-position frames that already equal their reference are passed
    through untouched.
    """
    video = np.asarray(video)
    key_video = np.asarray(key_video)
    if video.shape[0] != sampling_map.t or key_video.shape[0] != sampling_map.t0:
        raise DimensionError(
            f"videos ({video.shape[0]}, {key_video.shape[0]}) do not fit the "
            f"{sampling_map.t0}x{sampling_map.t} sampling map"
        )
    out = video.copy()
    scale = sampling_map.scale
    for frame in range(video.shape[0]):
        ki = nearest_key_index(frame, scale, sampling_map.t0)
        if frame == sampling_map.key_indices[ki] and np.array_equal(
                video[frame], key_video[ki]):
            continue
        mu_x, sd_x = channel_stats(video, frame)
        mu_k, sd_k = channel_stats(key_video, ki)
        denom = np.maximum(sd_x, ADAIN_EPS)
        shifted = (video[frame] - mu_x[:, None, None]) / denom[:, None, None]
        out[frame] = (shifted * sd_k[:, None, None] + mu_k[:, None, None]) \
            .astype(video.dtype)
    return out


class _HookedDenoiser:
    """Counts sampler calls so hooks know the current denoise step index."""

    def __init__(self, net, hooks, window_mode):
        self.net = net
        self.hooks = hooks
        self.window_mode = window_mode
        self._calls = 0

    def __call__(self, z, t, cond):
        if self.hooks is not None:
            self.hooks.begin_step(self._calls, t)
        out = self.net.denoise(z, t, cond, hooks=self.hooks,
                               window_mode=self.window_mode)
        self._calls += 1
        return out


class CascadeRunner:
    """Binds (config, denoiser, schedule, seed) and runs stages/baselines."""

    def __init__(self, config: CascadeConfig, denoiser, schedule: NoiseSchedule,
                 seed: int):
        self.config = config
        self.schedule = schedule
        self.seed = int(seed)
        dtype = DTYPES[config.dtype]
        if denoiser.config.t0 != config.t0:
            raise ConfigError(
                f"denoiser trained at t0={denoiser.config.t0}, cascade expects "
                f"{config.t0}"
            )
        self.denoiser = denoiser if denoiser.params["patch.w"].dtype == dtype \
            else denoiser.cast(dtype)
        self.steps = schedule.sampling_steps(config.sample_steps)
        bc = self.denoiser.config
        self._frame_shape = (bc.channels, bc.height, bc.width)
        self._draw_finest()

    def _draw_finest(self):
        """Finest-stage noise tensors; each stage subsamples these.

        "repeat" draws one noise frame per base key frame and repeats it for
        the frames a key expands into, so an interpolated frame starts from
        its key frame's noise (the long-sequence generator recipe this
        build follows); "iid" draws every finest frame independently.
        """
        cfg = self.config
        rng = np.random.default_rng(self.seed)
        dtype = DTYPES[cfg.dtype]
        count = len(self.steps)  # init noise plus one tensor per transition
        if cfg.noise_mode == "iid":
            shape = (cfg.final_frames,) + self._frame_shape
            draws = [rng.standard_normal(shape, dtype=dtype) for _ in range(count)]
        else:
            expand = cfg.final_frames // cfg.t0
            base_shape = (cfg.t0,) + self._frame_shape
            draws = [np.repeat(rng.standard_normal(base_shape, dtype=dtype),
                               expand, axis=0) for _ in range(count)]
        self.finest_init = draws[0]
        self.finest_steps = draws[1:]

    def stage_noises(self, stage: int):
        cfg = self.config
        init = correspond_noise(self.finest_init, stage, cfg.scale, cfg.stages)
        noises = [correspond_noise(x, stage, cfg.scale, cfg.stages)
                  for x in self.finest_steps]
        return init, noises

    def stage_cond(self, stage: int) -> dict:
        return {"class_id": self.config.class_id,
                "fps": scale_fps(self.config.fps, self.config.scale ** (stage - 1))}

    def _adain_hooks(self, stage: int):
        cfg = self.config
        if stage == 1 or not cfg.color_correction:
            return None, None
        op = build_sampling(cfg.stage_frames(stage - 1), cfg.scale)

        def adain(video):
            return color_tone_correct(video, extract_key_frames(op, video), op)

        if cfg.adain_target == "x0":
            return (lambda i, t, x0: adain(x0)), None
        return None, (lambda i, s, z: adain(z))

    def _run_stage(self, stage: int, hooks) -> np.ndarray:
        cfg = self.config
        init, noises = self.stage_noises(stage)
        x0_hook, z_hook = self._adain_hooks(stage)
        wrapped = _HookedDenoiser(self.denoiser, hooks, cfg.windowing)
        return sample(wrapped, self.schedule, init, self.steps,
                      cond=self.stage_cond(stage), eta=cfg.eta,
                      step_noises=noises, posterior_var=cfg.posterior_var,
                      clip_x0=cfg.clip_x0, x0_hook=x0_hook, z_hook=z_hook)

    def run(self, through_stage: int | None = None) -> list:
        """Run stages 1..through_stage (default: all) and return StageResults."""
        cfg = self.config
        last = cfg.stages if through_stage is None else through_stage
        if not 1 <= last <= cfg.stages:
            raise RangeError(f"through_stage {last} outside [1, {cfg.stages}]")
        results = []
        cache_prev = None
        for stage in range(1, last + 1):
            cache = HiddenCache()
            if stage == 1:
                hooks = StageHooks(cache_out=cache)
            else:
                sampling = build_sampling(cfg.stage_frames(stage - 1), cfg.scale)
                hooks = StageHooks(
                    cache_in=cache_prev, cache_out=cache, sampling=sampling,
                    schedule=CorrectionSchedule(cfg.control_coeff,
                                                self.schedule.num_steps),
                    selector=BranchSelector(self.seed, stage, mode=cfg.selector),
                    temporal=cfg.temporal_correction,
                    spatial=cfg.spatial_correction,
                    spatial_kv=cfg.spatial_kv, ccs=cfg.ccs)
            video = self._run_stage(stage, hooks)
            results.append(StageResult(
                stage=stage, video=video, cache=cache,
                fps=self.stage_cond(stage)["fps"],
                guidance=interp_guidance(cfg.guidance_lo, cfg.guidance_hi,
                                         cfg.stage_frames(stage))))
            cache_prev = cache
        return results

    def direct_inference(self) -> StageResult:
        """Sample at the final frame count with adapted attention, no correction."""
        cfg = self.config
        stage = cfg.stages
        video = self._run_stage(stage, None)
        return StageResult(stage=stage, video=video, cache=None,
                           fps=self.stage_cond(stage)["fps"],
                           guidance=interp_guidance(cfg.guidance_lo, cfg.guidance_hi,
                                                    cfg.stage_frames(stage)))

    def ddnm_latent(self, base_video: np.ndarray) -> StageResult:
        """Latent back-projection baseline at the final frame count.

        After every denoising step the prediction's range-space part is
        replaced with the base video, so its key frames match base_video
        exactly in the output.
        """
        cfg = self.config
        base_video = np.asarray(base_video, dtype=DTYPES[cfg.dtype])
        if base_video.shape != (cfg.t0,) + self._frame_shape:
            raise DimensionError(
                f"base video shape {base_video.shape} does not match "
                f"({cfg.t0},) + {self._frame_shape}"
            )
        stage = cfg.stages
        overall = cfg.final_frames // cfg.t0
        if overall < 2:
            raise ConfigError("latent baseline needs at least one 2x stage")
        op = build_sampling(cfg.t0, overall)
        init, noises = self.stage_noises(stage)
        wrapped = _HookedDenoiser(self.denoiser, None, cfg.windowing)
        video = sample(wrapped, self.schedule, init, self.steps,
                       cond=self.stage_cond(stage), eta=cfg.eta,
                       step_noises=noises, posterior_var=cfg.posterior_var,
                       clip_x0=cfg.clip_x0,
                       x0_hook=lambda i, t, x0: back_project(x0, base_video, op))
        return StageResult(stage=stage, video=video, cache=None,
                           fps=self.stage_cond(stage)["fps"],
                           guidance=interp_guidance(cfg.guidance_lo, cfg.guidance_hi,
                                                    cfg.stage_frames(stage)))


def run_cascade(config: CascadeConfig, denoiser, schedule: NoiseSchedule,
                seed: int, through_stage: int | None = None) -> list:
    return CascadeRunner(config, denoiser, schedule, seed).run(through_stage)


def direct_inference(config: CascadeConfig, denoiser, schedule: NoiseSchedule,
                     seed: int) -> StageResult:
    return CascadeRunner(config, denoiser, schedule, seed).direct_inference()


def ddnm_latent_baseline(config: CascadeConfig, denoiser, schedule: NoiseSchedule,
                         base_video: np.ndarray, seed: int) -> StageResult:
    return CascadeRunner(config, denoiser, schedule, seed).ddnm_latent(base_video)
