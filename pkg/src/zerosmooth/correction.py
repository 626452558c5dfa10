"""Hidden-state correction inside attention blocks, and the per-step cache.

During a key-frame (base) run, every hooked attention module records its
input hidden state per denoising step. During a higher-frame-rate run the
same modules fetch those states and back-project: temporal attention inputs
are corrected with the sampling operator; spatial queries use the sampling
operator through Wq; spatial keys/values use one of the two 2x averaging
operators, chosen per (step, module) by thresholding a random draw at 0.5.
Block outputs are then blended with the uncorrected output using a
control weight w(t) = c * sqrt(t / T) that shrinks as denoising proceeds.

A run that both consumes and records (the middle stages of a deeper
cascade) records the corrected states, so the next stage calibrates against
what this stage actually computed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import CacheMissError, ConfigError, DimensionError
from .operators import LinearMeasurement, OperatorKind, back_project, interp_pair
from .backbone import checkpoint

ROLE_TEMPORAL = "h_temporal"
ROLE_SPATIAL = "h_spatial"
SELECTOR_MODES = ("gaussian", "uniform")
SPATIAL_KV_MODES = ("interp", "sampling")


class HiddenCache:
    """Write-once map (step index, module id, role) -> hidden state."""

    def __init__(self):
        self._store = {}

    def record(self, step: int, module_id: str, role: str, value) -> None:
        key = (int(step), module_id, role)
        if key in self._store:
            raise ConfigError(
                f"hidden state already recorded for step={step} "
                f"module={module_id!r} role={role!r}"
            )
        arr = np.asarray(value)
        try:
            arr.setflags(write=False)
        except ValueError:
            arr = arr.copy()
            arr.setflags(write=False)
        self._store[key] = arr

    def fetch(self, step: int, module_id: str, role: str) -> np.ndarray:
        try:
            return self._store[(int(step), module_id, role)]
        except KeyError:
            raise CacheMissError(step, module_id, role) from None

    def __len__(self):
        return len(self._store)

    def keys(self):
        return self._store.keys()

    def save(self, path) -> None:
        named = {f"{k[0]}/{k[1]}/{k[2]}": v for k, v in self._store.items()}
        checkpoint.save_named_arrays(path, named)

    @classmethod
    def load(cls, path) -> "HiddenCache":
        cache = cls()
        for name, arr in checkpoint.load_named_arrays(path).items():
            step, module_id, role = name.split("/", 2)
            cache.record(int(step), module_id, role, arr)
        return cache


def record_hidden(cache: HiddenCache, step, module_id, role, hk) -> None:
    cache.record(step, module_id, role, hk)


def fetch_hidden(cache: HiddenCache, step, module_id, role) -> np.ndarray:
    return cache.fetch(step, module_id, role)


@dataclass(frozen=True)
class CorrectionSchedule:
    """Control weight w(t) = coeff * sqrt(t / total_steps)."""

    coeff: float = 0.8
    total_steps: int = 1000

    def __post_init__(self):
        if not 0.0 <= self.coeff <= 1.0:
            raise ConfigError(f"control coefficient must lie in [0, 1], got {self.coeff}")
        if self.total_steps < 1:
            raise ConfigError(f"total_steps must be positive, got {self.total_steps}")

    def weight(self, t: int) -> float:
        if not 0 <= t <= self.total_steps:
            raise ConfigError(f"timestep {t} outside [0, {self.total_steps}]")
        return self.coeff * float(np.sqrt(t / self.total_steps))


def _require_sampling(m: LinearMeasurement):
    if m.kind is not OperatorKind.SAMPLING:
        raise ConfigError(f"expected a sampling operator, got {m.kind.value}")


def correct_temporal(h, hk, sampling: LinearMeasurement) -> np.ndarray:
    """Back-project temporal attention input: key-frame rows become hk."""
    _require_sampling(sampling)
    return back_project(h, hk, sampling)


def correct_spatial_q(q, hk, wq, sampling: LinearMeasurement) -> np.ndarray:
    """Corrected spatial query: key-frame rows become the projected hk."""
    _require_sampling(sampling)
    hk = np.asarray(hk)
    wq = np.asarray(wq)
    if wq.ndim != 2 or wq.shape[0] != wq.shape[1] or hk.shape[-1] != wq.shape[1]:
        raise DimensionError(f"projection {wq.shape} does not match states {hk.shape}")
    return back_project(q, hk @ wq.T.astype(hk.dtype), sampling)


def correct_spatial_kv(x, hk, w, p: float, a1=None, a2=None) -> np.ndarray:
    """Corrected spatial key or value via one of the 2x averaging operators.

    The draw p selects the branch: p > 0.5 uses the (2i, 2i+1)-averaging
    operator, otherwise the corner-pinned one. Mixing both across modules
    avoids a systematic half-frame timestamp bias.
    """
    hk = np.asarray(hk)
    x = np.asarray(x)
    if a1 is None or a2 is None:
        a1, a2 = interp_pair(hk.shape[0])
    op = a1 if p > 0.5 else a2
    if x.shape[0] != op.t:
        raise DimensionError(f"expected {op.t} frames, got {x.shape[0]}")
    w = np.asarray(w)
    if w.ndim != 2 or hk.shape[-1] != w.shape[1]:
        raise DimensionError(f"projection {w.shape} does not match states {hk.shape}")
    return back_project(x, hk @ w.T.astype(hk.dtype), op)


def _blend_with_weight(o, o_hat, w: float):
    if not 0.0 <= w <= 1.0:
        raise ConfigError(f"blend weight must lie in [0, 1], got {w}")
    if w == 0.0:
        return o
    if w == 1.0:
        return o_hat
    return o + np.asarray(o).dtype.type(w) * (o_hat - o)


def blend_output(o, o_hat, t: int, schedule: CorrectionSchedule):
    """Controlled output: o + w(t) * (o_hat - o)."""
    if np.asarray(o).shape != np.asarray(o_hat).shape:
        raise DimensionError("blend operands must have equal shapes")
    return _blend_with_weight(o, o_hat, schedule.weight(t))


class BranchSelector:
    """Reproducible per-(stage, step, module) draws for the K/V operator mix."""

    def __init__(self, seed: int, stage: int, mode: str = "gaussian"):
        if mode not in SELECTOR_MODES:
            raise ConfigError(f"selector must be one of {SELECTOR_MODES}")
        self.seed = int(seed)
        self.stage = int(stage)
        self.mode = mode

    def draw(self, step: int, module_id: str) -> float:
        key = f"{self.seed}/{self.stage}/{step}/{module_id}".encode()
        sub = int.from_bytes(hashlib.sha256(key).digest()[:8], "little")
        rng = np.random.default_rng(sub)
        if self.mode == "gaussian":
            return float(rng.standard_normal())
        return float(rng.uniform())


class StageHooks:
    """Per-stage hook implementation handed to the denoiser.

    With only cache_out set, the hooks record raw attention inputs (base
    run). With cache_in set as well, they correct against the previous
    stage's recordings and record the corrected states for the next stage.
    """

    def __init__(self, *, cache_in: HiddenCache | None = None,
                 cache_out: HiddenCache | None = None,
                 sampling: LinearMeasurement | None = None,
                 schedule: CorrectionSchedule | None = None,
                 selector: BranchSelector | None = None,
                 temporal: bool = True, spatial: bool = True,
                 spatial_kv: str = "interp", ccs: bool = True):
        if spatial_kv not in SPATIAL_KV_MODES:
            raise ConfigError(f"spatial_kv must be one of {SPATIAL_KV_MODES}")
        if cache_in is not None:
            if sampling is None:
                raise ConfigError("correction hooks need the sampling operator")
            _require_sampling(sampling)
            if ccs and schedule is None:
                raise ConfigError("controlled correction needs a schedule")
            if spatial and spatial_kv == "interp" and selector is None:
                raise ConfigError("interp K/V correction needs a branch selector")
        self.cache_in = cache_in
        self.cache_out = cache_out
        self.sampling = sampling
        self.schedule = schedule
        self.selector = selector
        self.temporal = temporal
        self.spatial = spatial
        self.spatial_kv = spatial_kv
        self.ccs = ccs
        self._step = None
        self._timestep = None
        if cache_in is not None and sampling is not None:
            self._interp = interp_pair(sampling.t0)
        else:
            self._interp = None

    def begin_step(self, step: int, timestep: int) -> None:
        self._step = int(step)
        self._timestep = int(timestep)

    def blend_weight(self) -> float:
        if not self.ccs:
            return 1.0
        return self.schedule.weight(self._timestep)

    def blend(self, module_id: str, o, o_hat):
        return _blend_with_weight(o, o_hat, self.blend_weight())

    def _record(self, module_id: str, role: str, value) -> None:
        if self.cache_out is not None:
            self.cache_out.record(self._step, module_id, role, value)

    def temporal_input(self, module_id: str, h):
        if self.cache_in is None or not self.temporal:
            self._record(module_id, ROLE_TEMPORAL, h)
            return None
        hk = self.cache_in.fetch(self._step, module_id, ROLE_TEMPORAL)
        h_hat = correct_temporal(h, hk, self.sampling)
        self._record(module_id, ROLE_TEMPORAL, h_hat)
        return h_hat

    def spatial_qkv(self, module_id: str, h, q, k, v, proj):
        if self.cache_in is None or not self.spatial:
            self._record(module_id, ROLE_SPATIAL, h)
            return None
        wq, wk, wv = proj
        hk = self.cache_in.fetch(self._step, module_id, ROLE_SPATIAL)
        q_hat = correct_spatial_q(q, hk, wq, self.sampling)
        if self.spatial_kv == "interp":
            a1, a2 = self._interp
            p = self.selector.draw(self._step, module_id)
            k_hat = correct_spatial_kv(k, hk, wk, p, a1, a2)
            v_hat = correct_spatial_kv(v, hk, wv, p, a1, a2)
        else:
            k_hat = back_project(k, hk @ wk.T.astype(hk.dtype), self.sampling)
            v_hat = back_project(v, hk @ wv.T.astype(hk.dtype), self.sampling)
        # the state handed to the next stage reflects this stage's correction
        self._record(module_id, ROLE_SPATIAL,
                     back_project(h, hk, self.sampling))
        return q_hat, k_hat, v_hat
