"""Training-free frame-rate upscaling for video diffusion samplers."""

from . import errors
from .backbone import BackboneConfig, SyntheticClipSpec, ToyDenoiser, generate_clip, train
from .cascade import (
    CascadeConfig,
    CascadeRunner,
    StageResult,
    color_tone_correct,
    correspond_noise,
    ddnm_latent_baseline,
    direct_inference,
    interp_guidance,
    run_cascade,
    scale_fps,
)
from .correction import (
    BranchSelector,
    CorrectionSchedule,
    HiddenCache,
    StageHooks,
    blend_output,
    correct_spatial_kv,
    correct_spatial_q,
    correct_temporal,
)
from .diffusion import NoiseSchedule, forward_diffuse, posterior_mean_var, predict_x0, sample
from .metrics import keyframe_consistency, psnr, ssim
from .operators import (
    LinearMeasurement,
    OperatorKind,
    back_project,
    build_interp,
    build_sampling,
)
from .window_attention import (
    WindowPlan,
    attention_fusion,
    interpolated_ape,
    plan_windows,
    windowed_attention,
    windowed_attention_rpe,
)

__version__ = "0.1.0"
