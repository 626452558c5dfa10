"""Plain-text key=value experiment configuration.

Every knob the pipelines expose has a default here; parsing rejects unknown
keys and coerces values to the default's type. `zerosmooth config
--defaults` prints this table.
"""

from __future__ import annotations

from .backbone import BackboneConfig
from .cascade import CascadeConfig
from .diffusion import NoiseSchedule
from .errors import ConfigError

DEFAULTS = {
    "seed": 0,
    "dtype": "float32",
    "schedule.train_steps": 1000,
    "schedule.beta_start": 1e-4,
    "schedule.beta_end": 0.02,
    "sample.steps": 50,
    "sample.eta": 1.0,
    "sample.posterior_var": "paper",
    "sample.clip_x0": True,
    "cascade.stages": 2,
    "cascade.scale": 2,
    "cascade.noise_mode": "repeat",
    "correction.coeff": 0.8,
    "correction.temporal": True,
    "correction.spatial": True,
    "correction.spatial_kv": "interp",
    "correction.ccs": True,
    "correction.selector": "gaussian",
    "attention.windowing": "overlap",
    "color.enabled": True,
    "color.target": "x0",
    "cond.fps": 8.0,
    "cond.class_id": 0,
    "cond.guidance_lo": 1.0,
    "cond.guidance_hi": 3.0,
    "backbone.t0": 8,
    "backbone.channels": 1,
    "backbone.height": 16,
    "backbone.width": 16,
    "backbone.dim": 32,
    "backbone.heads": 2,
    "backbone.blocks": 2,
    "backbone.pos_mode": "rpe",
    "train.steps": 2000,
    "train.lr": 2e-3,
    "train.heldout": 16,
}

_BOOL_WORDS = {"true": True, "1": True, "yes": True,
               "false": False, "0": False, "no": False}


def _coerce(key: str, raw: str):
    default = DEFAULTS[key]
    if isinstance(default, bool):
        word = raw.strip().lower()
        if word not in _BOOL_WORDS:
            raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
        return _BOOL_WORDS[word]
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from None
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    return raw.strip()


def parse_config(text: str) -> dict:
    cfg = dict(DEFAULTS)
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        cfg[key] = _coerce(key, raw)
    return cfg


def load_config(path=None) -> dict:
    if path is None:
        return dict(DEFAULTS)
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def format_defaults() -> str:
    lines = []
    for key, value in DEFAULTS.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


def schedule_from(cfg: dict) -> NoiseSchedule:
    return NoiseSchedule.linear_beta(cfg["schedule.train_steps"],
                                     cfg["schedule.beta_start"],
                                     cfg["schedule.beta_end"])


def backbone_config_from(cfg: dict) -> BackboneConfig:
    return BackboneConfig(
        t0=cfg["backbone.t0"],
        channels=cfg["backbone.channels"],
        height=cfg["backbone.height"],
        width=cfg["backbone.width"],
        dim=cfg["backbone.dim"],
        heads=cfg["backbone.heads"],
        blocks=cfg["backbone.blocks"],
        pos_mode=cfg["backbone.pos_mode"],
    )


def cascade_config_from(cfg: dict) -> CascadeConfig:
    return CascadeConfig(
        stages=cfg["cascade.stages"],
        scale=cfg["cascade.scale"],
        t0=cfg["backbone.t0"],
        control_coeff=cfg["correction.coeff"],
        fps=cfg["cond.fps"],
        class_id=cfg["cond.class_id"],
        selector=cfg["correction.selector"],
        windowing=cfg["attention.windowing"],
        color_correction=cfg["color.enabled"],
        adain_target=cfg["color.target"],
        posterior_var=cfg["sample.posterior_var"],
        eta=cfg["sample.eta"],
        clip_x0=cfg["sample.clip_x0"],
        temporal_correction=cfg["correction.temporal"],
        spatial_correction=cfg["correction.spatial"],
        spatial_kv=cfg["correction.spatial_kv"],
        ccs=cfg["correction.ccs"],
        guidance_lo=cfg["cond.guidance_lo"],
        guidance_hi=cfg["cond.guidance_hi"],
        sample_steps=cfg["sample.steps"],
        dtype=cfg["dtype"],
        noise_mode=cfg["cascade.noise_mode"],
    )
