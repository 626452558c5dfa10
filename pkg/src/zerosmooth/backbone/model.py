"""Desk-scale video denoiser with hand-rolled backprop.

The network runs on (frames, tokens, dim) hidden states with one token per
pixel. Each block stacks a conv residual unit, spatial self-attention over
tokens within a frame, and temporal self-attention across frames. Temporal
attention always goes through the window planner, so a t0-frame input is the
degenerate single-window case and longer inputs reuse the same code path.

Attention blocks expose hook sites: a hooks object may replace the temporal
attention input, or the spatial Q/K/V after projection, in which case the
block computes both the original and the corrected attention output and asks
the hooks to blend them. Hooks returning None (or the identical input
object) leave the computation untouched operation-for-operation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DimensionError, TrainingError
from ..window_attention import (
    ape_table,
    plan_windows,
    scaled_dot_attention,
    scaled_dot_attention_backward,
    sinusoidal_embedding,
    windowed_attention,
    windowed_attention_backward,
    AttentionWeights,
)
from . import checkpoint
from .layers import (
    conv3x3,
    conv3x3_backward,
    layer_norm,
    layer_norm_backward,
    silu,
    silu_backward,
)

POS_MODES = ("rpe", "ape", "none")
REFERENCE_FPS = 8.0
NUM_CLASSES = 2


@dataclass(frozen=True)
class BackboneConfig:
    t0: int = 8
    channels: int = 1
    height: int = 16
    width: int = 16
    dim: int = 32
    heads: int = 2
    blocks: int = 2
    pos_mode: str = "rpe"

    def __post_init__(self):
        if self.t0 < 2:
            raise ConfigError(f"t0 must be >= 2, got {self.t0}")
        if self.dim % self.heads != 0:
            raise ConfigError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.dim % 2 != 0:
            raise ConfigError(f"dim must be even for sinusoidal embeddings")
        if self.pos_mode not in POS_MODES:
            raise ConfigError(f"pos_mode must be one of {POS_MODES}")

    @property
    def tokens(self) -> int:
        return self.height * self.width


def init_params(config: BackboneConfig, rng: np.random.Generator) -> dict:
    d, c = config.dim, config.channels
    p = {}

    def dense(name, rows, cols, scale=None):
        std = scale if scale is not None else 1.0 / np.sqrt(cols)
        p[name] = rng.standard_normal((rows, cols)) * std

    dense("patch.w", d, c, scale=1.0 / np.sqrt(c))
    p["patch.b"] = np.zeros(d)
    dense("time.w1", d, d)
    p["time.b1"] = np.zeros(d)
    dense("time.w2", d, d)
    p["time.b2"] = np.zeros(d)
    p["class.table"] = rng.standard_normal((NUM_CLASSES, d)) * 0.02
    p["fps.vec"] = rng.standard_normal(d) * 0.02
    for i in range(config.blocks):
        pre = f"block{i}"
        p[f"{pre}.res.ln.g"] = np.ones(d)
        p[f"{pre}.res.ln.b"] = np.zeros(d)
        dense(f"{pre}.res.conv1.w", 9 * d, d, scale=1.0 / np.sqrt(9 * d))
        p[f"{pre}.res.conv1.b"] = np.zeros(d)
        dense(f"{pre}.res.emb.w", d, d)
        p[f"{pre}.res.emb.b"] = np.zeros(d)
        dense(f"{pre}.res.conv2.w", 9 * d, d, scale=0.1 / np.sqrt(9 * d))
        p[f"{pre}.res.conv2.b"] = np.zeros(d)
        p[f"{pre}.sattn.ln.g"] = np.ones(d)
        p[f"{pre}.sattn.ln.b"] = np.zeros(d)
        for w in ("wq", "wk", "wv"):
            dense(f"{pre}.sattn.{w}", d, d)
        dense(f"{pre}.sattn.wo", d, d, scale=0.1 / np.sqrt(d))
        p[f"{pre}.tattn.ln.g"] = np.ones(d)
        p[f"{pre}.tattn.ln.b"] = np.zeros(d)
        for w in ("wq", "wk", "wv"):
            dense(f"{pre}.tattn.{w}", d, d)
        dense(f"{pre}.tattn.wo", d, d, scale=0.1 / np.sqrt(d))
        if config.pos_mode == "rpe":
            p[f"{pre}.tattn.pk"] = rng.standard_normal((config.t0, d)) * 0.02
            p[f"{pre}.tattn.pv"] = rng.standard_normal((config.t0, d)) * 0.02
        elif config.pos_mode == "ape":
            dense(f"{pre}.tattn.ape.w", d, d)
            p[f"{pre}.tattn.ape.b"] = np.zeros(d)
    p["head.ln.g"] = np.ones(d)
    p["head.ln.b"] = np.zeros(d)
    dense("head.w", c, d, scale=0.1 / np.sqrt(d))
    p["head.b"] = np.zeros(c)
    return p


class ToyDenoiser:
    """Noise-prediction network over (T, C, H, W) videos."""

    def __init__(self, config: BackboneConfig, params: dict):
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: BackboneConfig, seed: int = 0) -> "ToyDenoiser":
        return cls(config, init_params(config, np.random.default_rng(seed)))

    def cast(self, dtype) -> "ToyDenoiser":
        return ToyDenoiser(self.config,
                           {k: v.astype(dtype) for k, v in self.params.items()})

    def hooked_modules(self):
        """Attention hook sites in forward order: (module id, kind)."""
        mods = []
        for i in range(self.config.blocks):
            mods.append((f"block{i}.spatial_attn", "spatial_self"))
            mods.append((f"block{i}.temporal_attn", "temporal_self"))
        return mods

    # -- persistence ------------------------------------------------------

    def save(self, path) -> None:
        checkpoint.save_named_arrays(path, self.params)

    @classmethod
    def load(cls, path, config: BackboneConfig, dtype=np.float64) -> "ToyDenoiser":
        raw = checkpoint.load_named_arrays(path)
        return cls(config, {k: v.astype(dtype) for k, v in raw.items()})

    # -- conditioning ------------------------------------------------------

    def _embedding(self, t, cond, want_tape):
        p = self.params
        dtype = p["patch.w"].dtype
        class_id = 0
        fps = REFERENCE_FPS
        if cond:
            class_id = int(cond.get("class_id", 0))
            fps = float(cond.get("fps", REFERENCE_FPS))
        if not 0 <= class_id < NUM_CLASSES:
            raise ConfigError(f"class_id {class_id} outside [0, {NUM_CLASSES})")
        temb = sinusoidal_embedding(float(t), self.config.dim).astype(dtype)
        e1 = temb @ p["time.w1"].T + p["time.b1"]
        e1s = silu(e1)
        emb_t = e1s @ p["time.w2"].T + p["time.b2"]
        fps_ratio = fps / REFERENCE_FPS
        emb = emb_t + p["class.table"][class_id] + fps_ratio * p["fps.vec"]
        tape = {"temb": temb, "e1": e1, "e1s": e1s,
                "class_id": class_id, "fps_ratio": fps_ratio} if want_tape else None
        return emb, tape

    # -- forward -----------------------------------------------------------

    def forward(self, z, t, cond=None, *, hooks=None, window_mode="overlap",
                want_tape=False):
        cfg = self.config
        p = self.params
        z = np.asarray(z)
        if z.ndim != 4 or z.shape[1:] != (cfg.channels, cfg.height, cfg.width):
            raise DimensionError(
                f"expected (T, {cfg.channels}, {cfg.height}, {cfg.width}), got {z.shape}"
            )
        if want_tape and hooks is not None:
            raise ConfigError("training tape and correction hooks are exclusive")
        frames = z.shape[0]
        plan = plan_windows(frames, cfg.t0, mode=window_mode)
        dtype = p["patch.w"].dtype

        tokens = z.reshape(frames, cfg.channels, cfg.tokens) \
                  .transpose(0, 2, 1).astype(dtype, copy=False)
        h = tokens @ p["patch.w"].T + p["patch.b"]
        emb, emb_tape = self._embedding(t, cond, want_tape)

        tape = {"tokens": tokens, "emb": emb_tape, "blocks": [],
                "frames": frames} if want_tape else None

        for i in range(cfg.blocks):
            pre = f"block{i}"
            btape = {} if want_tape else None

            # conv residual unit
            r, ln_cache = layer_norm(h, p[f"{pre}.res.ln.g"], p[f"{pre}.res.ln.b"])
            rimg = r.reshape(frames, cfg.height, cfg.width, cfg.dim)
            y1, cols1 = conv3x3(rimg, p[f"{pre}.res.conv1.w"], p[f"{pre}.res.conv1.b"])
            embp = emb @ p[f"{pre}.res.emb.w"].T + p[f"{pre}.res.emb.b"]
            y1e = y1 + embp
            act = silu(y1e)
            y2, cols2 = conv3x3(act, p[f"{pre}.res.conv2.w"], p[f"{pre}.res.conv2.b"])
            h = h + y2.reshape(frames, cfg.tokens, cfg.dim)
            if want_tape:
                btape["res"] = {"ln": ln_cache, "cols1": cols1, "y1e": y1e,
                                "cols2": cols2}

            # spatial self-attention (tokens within each frame)
            s_in, sln_cache = layer_norm(h, p[f"{pre}.sattn.ln.g"],
                                         p[f"{pre}.sattn.ln.b"])
            wq, wk, wv = (p[f"{pre}.sattn.wq"], p[f"{pre}.sattn.wk"],
                          p[f"{pre}.sattn.wv"])
            q = s_in @ wq.T
            k = s_in @ wk.T
            v = s_in @ wv.T
            corrected = None
            if hooks is not None:
                corrected = hooks.spatial_qkv(f"{pre}.spatial_attn", s_in, q, k, v,
                                              (wq, wk, wv))
            o, sdp_cache = scaled_dot_attention(q, k, v, cfg.heads,
                                                want_cache=want_tape)
            if corrected is not None:
                w_blend = hooks.blend_weight()
                if w_blend != 0.0:
                    o_hat, _ = scaled_dot_attention(*corrected, cfg.heads)
                    o = hooks.blend(f"{pre}.spatial_attn", o, o_hat)
            h = h + o @ p[f"{pre}.sattn.wo"].T
            if want_tape:
                btape["sattn"] = {"ln": sln_cache, "s_in": s_in, "sdp": sdp_cache,
                                  "o": o}

            # temporal self-attention (frames at each token position)
            t_in, tln_cache = layer_norm(h, p[f"{pre}.tattn.ln.g"],
                                         p[f"{pre}.tattn.ln.b"])
            weights = AttentionWeights(p[f"{pre}.tattn.wq"], p[f"{pre}.tattn.wk"],
                                       p[f"{pre}.tattn.wv"], heads=cfg.heads)
            pk = pv = u = rows = None
            if cfg.pos_mode == "rpe":
                pk = p[f"{pre}.tattn.pk"]
                pv = p[f"{pre}.tattn.pv"]
            elif cfg.pos_mode == "ape":
                rows = ape_table(cfg.t0, frames, cfg.dim).astype(dtype)
                u = rows @ p[f"{pre}.tattn.ape.w"].T + p[f"{pre}.tattn.ape.b"]
            h_hat = None
            if hooks is not None:
                h_hat = hooks.temporal_input(f"{pre}.temporal_attn", t_in)
            o, wbundle = windowed_attention(t_in, weights, plan, pk=pk, pv=pv, u=u,
                                            want_caches=want_tape)
            if h_hat is not None and h_hat is not t_in:
                w_blend = hooks.blend_weight()
                if w_blend != 0.0:
                    o_hat, _ = windowed_attention(h_hat, weights, plan,
                                                  pk=pk, pv=pv, u=u)
                    o = hooks.blend(f"{pre}.temporal_attn", o, o_hat)
            h = h + o @ p[f"{pre}.tattn.wo"].T
            if want_tape:
                btape["tattn"] = {"ln": tln_cache, "bundle": wbundle, "o": o,
                                  "ape_rows": rows if cfg.pos_mode == "ape" else None}
                tape["blocks"].append(btape)

        hf, head_cache = layer_norm(h, p["head.ln.g"], p["head.ln.b"])
        eps_tokens = hf @ p["head.w"].T + p["head.b"]
        eps = eps_tokens.transpose(0, 2, 1).reshape(frames, cfg.channels,
                                                    cfg.height, cfg.width)
        if want_tape:
            tape["head"] = {"ln": head_cache, "hf": hf}
        return eps, tape

    def denoise(self, z, t, cond=None, *, hooks=None, window_mode="overlap"):
        eps, _ = self.forward(z, t, cond, hooks=hooks, window_mode=window_mode)
        return eps

    def __call__(self, z, t, cond=None):
        return self.denoise(z, t, cond)

    # -- backward ----------------------------------------------------------

    def backward(self, tape, d_eps) -> dict:
        """Gradients of every parameter given d(loss)/d(eps_hat)."""
        cfg = self.config
        p = self.params
        frames = tape["frames"]
        grads = {}

        def acc(name, g):
            if name in grads:
                grads[name] += g
            else:
                grads[name] = np.asarray(g)

        dtok = d_eps.reshape(frames, cfg.channels, cfg.tokens).transpose(0, 2, 1)
        hf = tape["head"]["hf"]
        acc("head.w", _flat_outer(dtok, hf))
        acc("head.b", dtok.sum(axis=(0, 1)))
        dhf = dtok @ p["head.w"]
        dh, dg, db = layer_norm_backward(dhf, tape["head"]["ln"], p["head.ln.g"])
        acc("head.ln.g", dg)
        acc("head.ln.b", db)

        demb = np.zeros(cfg.dim, dtype=d_eps.dtype)
        emb_vec = _emb_vector(self, tape)
        for i in reversed(range(cfg.blocks)):
            pre = f"block{i}"
            btape = tape["blocks"][i]

            # temporal attention
            tt = btape["tattn"]
            acc(f"{pre}.tattn.wo", _flat_outer(dh, tt["o"]))
            do = dh @ p[f"{pre}.tattn.wo"]
            weights = AttentionWeights(p[f"{pre}.tattn.wq"], p[f"{pre}.tattn.wk"],
                                       p[f"{pre}.tattn.wv"], heads=cfg.heads)
            dt_in, dwq, dwk, dwv, dpk, dpv, du = windowed_attention_backward(
                do, tt["bundle"], weights)
            acc(f"{pre}.tattn.wq", dwq)
            acc(f"{pre}.tattn.wk", dwk)
            acc(f"{pre}.tattn.wv", dwv)
            if cfg.pos_mode == "rpe":
                acc(f"{pre}.tattn.pk", dpk)
                acc(f"{pre}.tattn.pv", dpv)
            elif cfg.pos_mode == "ape":
                rows = tt["ape_rows"]
                acc(f"{pre}.tattn.ape.w", du.T @ rows)
                acc(f"{pre}.tattn.ape.b", du.sum(axis=0))
            dx, dg, db = layer_norm_backward(dt_in, tt["ln"], p[f"{pre}.tattn.ln.g"])
            acc(f"{pre}.tattn.ln.g", dg)
            acc(f"{pre}.tattn.ln.b", db)
            dh = dh + dx

            # spatial attention
            st = btape["sattn"]
            acc(f"{pre}.sattn.wo", _flat_outer(dh, st["o"]))
            do = dh @ p[f"{pre}.sattn.wo"]
            dq, dk, dv = scaled_dot_attention_backward(do, st["sdp"], cfg.heads)
            s_in = st["s_in"]
            acc(f"{pre}.sattn.wq", _flat_outer(dq, s_in))
            acc(f"{pre}.sattn.wk", _flat_outer(dk, s_in))
            acc(f"{pre}.sattn.wv", _flat_outer(dv, s_in))
            ds_in = dq @ p[f"{pre}.sattn.wq"] + dk @ p[f"{pre}.sattn.wk"] \
                + dv @ p[f"{pre}.sattn.wv"]
            dx, dg, db = layer_norm_backward(ds_in, st["ln"], p[f"{pre}.sattn.ln.g"])
            acc(f"{pre}.sattn.ln.g", dg)
            acc(f"{pre}.sattn.ln.b", db)
            dh = dh + dx

            # conv residual unit
            rt = btape["res"]
            dy2 = dh.reshape(frames, cfg.height, cfg.width, cfg.dim)
            dact, dw2, db2 = conv3x3_backward(dy2, rt["cols2"],
                                              p[f"{pre}.res.conv2.w"], cfg.dim)
            acc(f"{pre}.res.conv2.w", dw2)
            acc(f"{pre}.res.conv2.b", db2)
            dy1e = silu_backward(dact, rt["y1e"])
            dembp = dy1e.sum(axis=(0, 1, 2))
            acc(f"{pre}.res.emb.w", np.outer(dembp, emb_vec))
            acc(f"{pre}.res.emb.b", dembp)
            demb += dembp @ p[f"{pre}.res.emb.w"]
            dr_img, dw1, db1 = conv3x3_backward(dy1e, rt["cols1"],
                                                p[f"{pre}.res.conv1.w"], cfg.dim)
            acc(f"{pre}.res.conv1.w", dw1)
            acc(f"{pre}.res.conv1.b", db1)
            dr = dr_img.reshape(frames, cfg.tokens, cfg.dim)
            dx, dg, db = layer_norm_backward(dr, rt["ln"], p[f"{pre}.res.ln.g"])
            acc(f"{pre}.res.ln.g", dg)
            acc(f"{pre}.res.ln.b", db)
            dh = dh + dx

        # conditioning embedding
        et = tape["emb"]
        acc("class.table", _one_hot_rows(et["class_id"], NUM_CLASSES, demb))
        acc("fps.vec", et["fps_ratio"] * demb)
        acc("time.w2", np.outer(demb, et["e1s"]))
        acc("time.b2", demb)
        de1 = silu_backward(demb @ p["time.w2"], et["e1"])
        acc("time.w1", np.outer(de1, et["temb"]))
        acc("time.b1", de1)

        acc("patch.w", _flat_outer(dh, tape["tokens"]))
        acc("patch.b", dh.sum(axis=(0, 1)))
        return grads

    def loss_and_grads(self, x0_noisy, t, eps_target, cond=None):
        """Mean-squared noise-prediction loss and its parameter gradients."""
        eps_hat, tape = self.forward(x0_noisy, t, cond, want_tape=True)
        diff = eps_hat - np.asarray(eps_target, dtype=eps_hat.dtype)
        loss = float((diff**2).mean())
        if not np.isfinite(loss):
            raise TrainingError(f"non-finite loss at step t={t}")
        d_eps = (2.0 / diff.size) * diff
        return loss, self.backward(tape, d_eps)


def _emb_vector(model: ToyDenoiser, tape) -> np.ndarray:
    et = tape["emb"]
    p = model.params
    emb_t = et["e1s"] @ p["time.w2"].T + p["time.b2"]
    return emb_t + p["class.table"][et["class_id"]] + et["fps_ratio"] * p["fps.vec"]


def _flat_outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Sum of outer products over all leading axes: (..., i),(... , j) -> (i, j)."""
    return a.reshape(-1, a.shape[-1]).T @ b.reshape(-1, b.shape[-1])


def _one_hot_rows(row: int, rows: int, vec: np.ndarray) -> np.ndarray:
    out = np.zeros((rows, vec.shape[0]), dtype=vec.dtype)
    out[row] = vec
    return out
