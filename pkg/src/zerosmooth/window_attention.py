"""Temporal attention over overlapping windows, with RPE/APE adaptation.

A network trained on t0-frame clips attends over longer sequences by
partitioning the frame axis into t0-sized windows (default: stride
t0 - floor(t0/2), last window clamped to end at t), running attention per
window, and fusing overlaps with per-frame convex weights built from linear
edge ramps. Absolute position indices are rescaled by t0/t so the embedded
temporal distances match the training regime.

The attention core also exposes its backward pass; the toy backbone trains
through it directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError, PlanError, RangeError

WINDOW_MODES = ("overlap", "appendix-literal")


@dataclass(frozen=True)
class WindowPlan:
    t: int
    t0: int
    overlap: int
    stride: int
    windows: tuple


def plan_windows(t: int, t0: int, mode: str = "overlap") -> WindowPlan:
    """Partition [0, t) into t0-sized windows.

    "overlap" places starts at min(i*stride, t-t0) with stride
    t0 - floor(t0/2); "appendix-literal" uses stride t0 for the starts (no
    overlap except through clamping) while keeping the same window count.
    """
    if t0 < 2:
        raise RangeError(f"window size must be >= 2, got {t0}")
    if t < t0:
        raise RangeError(f"sequence of {t} frames is shorter than window {t0}")
    if mode not in WINDOW_MODES:
        raise ConfigError(f"windowing mode must be one of {WINDOW_MODES}")
    overlap = t0 // 2
    stride = t0 - overlap
    n = -(-(t - t0) // stride)  # ceil
    step = stride if mode == "overlap" else t0
    starts = []
    for i in range(n + 1):
        s = min(i * step, t - t0)
        if not starts or s != starts[-1]:
            starts.append(s)
    windows = tuple((s, s + t0) for s in starts)
    return WindowPlan(t, t0, overlap, stride, windows)


def fusion_weights(plan: WindowPlan) -> np.ndarray:
    """Per-frame convex weights, one row per window.

    Each window carries a profile that ramps linearly over `overlap` frames
    at both edges and is 1 inside; profiles are renormalized per frame so a
    frame covered by a single window passes through unchanged.
    """
    nw = len(plan.windows)
    raw = np.zeros((nw, plan.t))
    ramp_len = plan.overlap
    for i, (s, e) in enumerate(plan.windows):
        j = np.arange(plan.t0, dtype=np.float64)
        if ramp_len > 0:
            prof = np.minimum.reduce([
                np.ones(plan.t0),
                (j + 1) / (ramp_len + 1),
                (plan.t0 - j) / (ramp_len + 1),
            ])
        else:
            prof = np.ones(plan.t0)
        raw[i, s:e] = prof
    totals = raw.sum(axis=0)
    if np.any(totals <= 0):
        raise PlanError("window plan leaves frames uncovered")
    return raw / totals


def attention_fusion(outputs, plan: WindowPlan) -> np.ndarray:
    """Fuse per-window outputs into a t-frame tensor with convex weights."""
    if len(outputs) != len(plan.windows):
        raise PlanError(
            f"plan has {len(plan.windows)} windows but got {len(outputs)} outputs"
        )
    for o, (s, e) in zip(outputs, plan.windows):
        if o.shape[0] != e - s:
            raise DimensionError(
                f"window output spans {o.shape[0]} frames, window is {e - s}"
            )
    if len(outputs) == 1:
        return outputs[0]
    weights = fusion_weights(plan)
    trail = (1,) * (outputs[0].ndim - 1)
    fused = np.zeros((plan.t,) + outputs[0].shape[1:], dtype=outputs[0].dtype)
    for i, (s, e) in enumerate(plan.windows):
        w = weights[i, s:e].astype(outputs[i].dtype).reshape((-1,) + trail)
        fused[s:e] += w * outputs[i]
    return fused


def sinusoidal_embedding(index, d: int) -> np.ndarray:
    """Interleaved sin/cos embedding of a (possibly fractional) index."""
    if d % 2 != 0:
        raise ConfigError(f"embedding dim must be even, got {d}")
    idx = np.asarray(index, dtype=np.float64)
    freqs = np.power(10000.0, 2.0 * np.arange(d // 2) / d)
    ang = idx[..., None] / freqs
    out = np.empty(idx.shape + (d,))
    out[..., 0::2] = np.sin(ang)
    out[..., 1::2] = np.cos(ang)
    return out


def interpolated_ape(pos: int, t0: int, t: int, d: int) -> np.ndarray:
    """Absolute positional embedding at index pos rescaled by t0/t.

    Positions are 1-based; pos = t lands on index t0 regardless of t, so the
    embedded temporal span matches the training-length regime.
    """
    if not 1 <= pos <= t:
        raise RangeError(f"position {pos} outside [1, {t}]")
    if t < t0:
        raise RangeError(f"target length {t} shorter than base length {t0}")
    return sinusoidal_embedding(pos * t0 / t, d)


def ape_table(t0: int, t: int, d: int) -> np.ndarray:
    """Interpolated APE rows for positions 1..t, shape (t, d)."""
    if t < t0:
        raise RangeError(f"target length {t} shorter than base length {t0}")
    return sinusoidal_embedding(np.arange(1, t + 1) * (t0 / t), d)


@dataclass(frozen=True)
class AttentionWeights:
    """Projection matrices for one attention operation (no output proj)."""

    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    heads: int = 1

    def __post_init__(self):
        d = self.wq.shape[0]
        for name in ("wq", "wk", "wv"):
            w = getattr(self, name)
            if w.shape != (d, d):
                raise DimensionError(f"{name} must be ({d}, {d}), got {w.shape}")
        if d % self.heads != 0:
            raise ConfigError(f"dim {d} not divisible by {self.heads} heads")


def _split_heads(x, heads):
    b, n, d = x.shape
    return x.reshape(b, n, heads, d // heads).transpose(0, 2, 1, 3)


def _merge_heads(x):
    b, h, n, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, n, h * dh)


def scaled_dot_attention(q, k, v, heads: int, want_cache: bool = False):
    """Softmax(Q Kᵀ / sqrt(d_head)) V over pre-projected (batch, tokens, dim).

    Per-head scaling reduces to the 1/sqrt(d) of the single-head formulation
    when heads == 1.
    """
    if q.ndim != 3 or k.ndim != 3 or v.ndim != 3:
        raise DimensionError("attention operands must be (batch, tokens, dim)")
    if k.shape != v.shape or q.shape[::2] != k.shape[::2]:
        raise DimensionError(
            f"inconsistent attention shapes {q.shape}, {k.shape}, {v.shape}"
        )
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scale = 1.0 / np.sqrt(qh.shape[-1])
    p = qh @ kh.swapaxes(-1, -2)
    p *= p.dtype.type(scale)
    p -= p.max(axis=-1, keepdims=True)
    np.exp(p, out=p)
    p /= p.sum(axis=-1, keepdims=True)
    out = _merge_heads(p @ vh)
    if not want_cache:
        return out, None
    return out, {"qh": qh, "kh": kh, "vh": vh, "p": p, "scale": scale}


def scaled_dot_attention_backward(dout, cache, heads: int):
    """Gradients of scaled_dot_attention w.r.t. its q/k/v operands."""
    p, qh, kh, vh = cache["p"], cache["qh"], cache["kh"], cache["vh"]
    scale = cache["scale"]
    dctx = _split_heads(dout, heads)
    dvh = p.swapaxes(-1, -2) @ dctx
    dp = dctx @ vh.swapaxes(-1, -2)
    ds = (dp - (dp * p).sum(axis=-1, keepdims=True)) * p
    dqh = (ds @ kh) * scale
    dkh = (ds.swapaxes(-1, -2) @ qh) * scale
    return _merge_heads(dqh), _merge_heads(dkh), _merge_heads(dvh)


def attention_core(xq, xk, xv, weights: AttentionWeights, want_cache: bool = False):
    """Project xq/xk/xv through Wq/Wk/Wv and run scaled dot-product attention."""
    q = xq @ weights.wq.T
    k = xk @ weights.wk.T
    v = xv @ weights.wv.T
    out, sdp = scaled_dot_attention(q, k, v, weights.heads, want_cache=want_cache)
    if not want_cache:
        return out, None
    return out, {"xq": xq, "xk": xk, "xv": xv, "sdp": sdp}


def attention_core_backward(dout, cache, weights: AttentionWeights):
    """Gradients of attention_core w.r.t. its inputs and projections."""
    dq, dk, dv = scaled_dot_attention_backward(dout, cache["sdp"], weights.heads)
    dxq = dq @ weights.wq
    dxk = dk @ weights.wk
    dxv = dv @ weights.wv
    def flat_outer(a, b):
        return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])

    dwq = flat_outer(dq, cache["xq"])
    dwk = flat_outer(dk, cache["xk"])
    dwv = flat_outer(dv, cache["xv"])
    return dxq, dxk, dxv, dwq, dwk, dwv


def windowed_attention(h, weights: AttentionWeights, plan: WindowPlan, *,
                       pk=None, pv=None, u=None, want_caches: bool = False):
    """Windowed temporal attention over a (frames, tokens, dim) tensor.

    Positional handling: with pk/pv given (relative mode) keys see h + pk and
    values see h + pv inside every window; with u given (absolute mode) all
    three operands see h + u[window]; with neither, plain attention. A
    single-window plan returns that window's output untouched.
    """
    h = np.asarray(h)
    if h.ndim != 3:
        raise DimensionError(f"expected (frames, tokens, dim), got {h.shape}")
    if h.shape[0] != plan.t:
        raise DimensionError(f"plan covers {plan.t} frames, tensor has {h.shape[0]}")
    if u is not None and (pk is not None or pv is not None):
        raise ConfigError("absolute and relative positions are mutually exclusive")
    for name, p in (("pk", pk), ("pv", pv)):
        if p is not None and p.shape != (plan.t0, h.shape[2]):
            raise DimensionError(f"{name} must be ({plan.t0}, {h.shape[2]})")
    if u is not None and u.shape != (plan.t, h.shape[2]):
        raise DimensionError(f"u must be ({plan.t}, {h.shape[2]}), got {u.shape}")

    outputs = []
    caches = []
    for s, e in plan.windows:
        hw = h[s:e].swapaxes(0, 1)  # (tokens, win, dim)
        if u is not None:
            x = hw + u[s:e][None].astype(hw.dtype)
            xq = xk = xv = x
        else:
            xq = hw
            xk = hw + pk[None].astype(hw.dtype) if pk is not None else hw
            xv = hw + pv[None].astype(hw.dtype) if pv is not None else hw
        o, cache = attention_core(xq, xk, xv, weights, want_cache=want_caches)
        outputs.append(o.swapaxes(0, 1))
        caches.append(cache)
    fused = attention_fusion(outputs, plan)
    if not want_caches:
        return fused, None
    return fused, {"plan": plan, "windows": caches,
                   "mode": "ape" if u is not None else "rpe",
                   "has_pk": pk is not None, "has_pv": pv is not None}


def windowed_attention_rpe(h, weights: AttentionWeights, pk, pv,
                           plan: WindowPlan) -> np.ndarray:
    """Relative-position windowed attention: keys see h+pk, values h+pv."""
    out, _ = windowed_attention(h, weights, plan, pk=pk, pv=pv)
    return out


def windowed_attention_backward(dout, bundle, weights: AttentionWeights):
    """Backward pass matching windowed_attention(want_caches=True).

    Returns (dh, dwq, dwk, dwv, dpk, dpv, du); position grads are None when
    the corresponding table was not used.
    """
    plan = bundle["plan"]
    caches = bundle["windows"]
    d = dout.shape[2]
    dt = dout.dtype
    if len(caches) == 1:
        w = np.ones((1, plan.t), dtype=dt)
    else:
        w = fusion_weights(plan).astype(dt)
    dh = np.zeros((plan.t,) + dout.shape[1:], dtype=dt)
    dwq = np.zeros((d, d), dtype=dt)
    dwk = np.zeros((d, d), dtype=dt)
    dwv = np.zeros((d, d), dtype=dt)
    dpk = np.zeros((plan.t0, d), dtype=dt) if bundle["has_pk"] else None
    dpv = np.zeros((plan.t0, d), dtype=dt) if bundle["has_pv"] else None
    du = np.zeros((plan.t, d), dtype=dt) if bundle["mode"] == "ape" else None
    for i, (s, e) in enumerate(plan.windows):
        do = (w[i, s:e].reshape(-1, 1, 1) * dout[s:e]).swapaxes(0, 1)
        dxq, dxk, dxv, gwq, gwk, gwv = attention_core_backward(do, caches[i], weights)
        dwq += gwq
        dwk += gwk
        dwv += gwv
        if bundle["mode"] == "ape":
            dsum = dxq + dxk + dxv
            dh[s:e] += dsum.swapaxes(0, 1)
            du[s:e] += dsum.sum(axis=0)
        else:
            dh[s:e] += (dxq + dxk + dxv).swapaxes(0, 1)
            if dpk is not None:
                dpk += dxk.sum(axis=0)
            if dpv is not None:
                dpv += dxv.sum(axis=0)
    return dh, dwq, dwk, dwv, dpk, dpv, du
