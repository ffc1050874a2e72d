"""The fusion network forward pass.

Layout conventions:

* Images and feature maps are [C, H, W] tensors.
* Window partitioning is non-overlapping patch x patch; token layout is
  [num_windows, patch^2, C] (rows = pixels), channel layout is
  [num_windows, C, patch^2] (rows = channels).
* Multi-head attention always splits the last (feature) axis into
  ``heads`` slices, so channel attention keeps all C rows per head (its
  weight matrices are C x C) and token attention keeps all patch^2 rows
  (T x T weights).  The scale is 1/sqrt(per-head feature size).
* Every attention site is followed by residual add, layer norm over the
  channel axis, a per-pixel FFN with residual, and a second layer norm.
  With a zero value projection the site therefore reduces to layer norm
  of its input, which the tests rely on.

Entity handling: annotations are deduplicated and sorted by their
normalized text before any arithmetic, so the forward pass is bitwise
insensitive to the order entities appear in the annotation file.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import numerics as nm
from ..entity_ingest import canonical_entity_order, dedupe_entities, stack_entity_features
from ..numerics import Rng, Tensor
from .config import ModelConfig
from .params import ModelParams

__all__ = [
    "ForwardTrace",
    "encode_shallow",
    "channel_cross_attention",
    "token_self_attention",
    "cgha",
    "assemble_shared",
    "reconstruct",
    "classify",
    "forward_full",
]

# Window batches processed per attention call; bounds peak memory on
# large images without changing results (windows are independent).
_WINDOW_CHUNK = 64


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass, plus recorded attention."""

    shallow_ir: Tensor
    shallow_vi: Tensor
    channel_ir: Tensor
    channel_vi: Tensor
    token_ir: Tensor
    token_vi: Tensor
    entity_ctx_ir: Tensor | None
    entity_ctx_vi: Tensor | None
    guided_ir: Tensor
    guided_vi: Tensor
    shared: Tensor
    fused: Tensor
    probs: Tensor
    attention: dict[str, Tensor] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# window partitioning


def _check_extents(x: Tensor, patch: int) -> None:
    _, h, w = x.shape
    if h % patch or w % patch:
        raise ValueError(f"extents {h}x{w} not multiples of patch {patch}")


def to_tokens(x: Tensor, patch: int) -> Tensor:
    """[C,H,W] -> [nw, patch^2, C], windows in row-major order."""
    c, h, w = x.shape
    t = x.reshape(c, h // patch, patch, w // patch, patch)
    t = t.transpose(1, 3, 2, 4, 0)
    return t.reshape((h // patch) * (w // patch), patch * patch, c)


def from_tokens(t: Tensor, patch: int, h: int, w: int) -> Tensor:
    c = t.shape[-1]
    x = t.reshape(h // patch, w // patch, patch, patch, c)
    x = x.transpose(4, 0, 2, 1, 3)
    return x.reshape(c, h, w)


def _to_global_tokens(x: Tensor) -> Tensor:
    c, h, w = x.shape
    return x.reshape(c, h * w).transpose(1, 0).reshape(1, h * w, c)


def _from_global_tokens(t: Tensor, h: int, w: int) -> Tensor:
    c = t.shape[-1]
    return t.reshape(h * w, c).transpose(1, 0).reshape(c, h, w)


# ---------------------------------------------------------------------------
# attention core


def _split_heads(t: Tensor, heads: int) -> Tensor:
    b, n, f = t.shape
    return t.reshape(b, n, heads, f // heads).transpose(0, 2, 1, 3)


def _merge_heads(t: Tensor) -> Tensor:
    b, heads, n, f = t.shape
    return t.transpose(0, 2, 1, 3).reshape(b, n, heads * f)


def _attend(q: Tensor, k: Tensor, v: Tensor, heads: int, record: bool):
    """Scaled dot-product attention over the window batch axis.

    q: [nq, Tq, F]; k, v: [nq or 1, Tk, F] (1 broadcasts over windows).
    Returns ([nq, Tq, F], row-stochastic weights [nq, heads, Tq, Tk] when
    recording, else None).  Long window batches are processed in chunks;
    recording forces the single-shot path.
    """
    nq = q.shape[0]
    if record or nq <= _WINDOW_CHUNK:
        return _attend_direct(q, k, v, heads, record)
    outs = []
    shared_kv = k.shape[0] == 1
    for lo in range(0, nq, _WINDOW_CHUNK):
        hi = min(lo + _WINDOW_CHUNK, nq)
        ks = k if shared_kv else k[lo:hi]
        vs = v if shared_kv else v[lo:hi]
        out, _ = _attend_direct(q[lo:hi], ks, vs, heads, False)
        outs.append(out)
    return nm.concat(outs, axis=0), None


def _attend_direct(q: Tensor, k: Tensor, v: Tensor, heads: int, record: bool):
    per_head = q.shape[-1] // heads
    qh = _split_heads(q, heads)
    kh = _split_heads(k, heads)
    vh = _split_heads(v, heads)
    scale = 1.0 / np.sqrt(per_head)
    scores = nm.matmul(qh, kh.transpose(0, 1, 3, 2)) * scale
    probs = nm.softmax_rows(scores)
    out = _merge_heads(nm.matmul(probs, vh))
    return out, (probs if record else None)


def _ffn(t: Tensor, params: ModelParams, prefix: str) -> Tensor:
    h = nm.gelu(nm.matmul(t, params[f"{prefix}.ffn.w1"]) + params[f"{prefix}.ffn.b1"])
    return nm.matmul(h, params[f"{prefix}.ffn.w2"]) + params[f"{prefix}.ffn.b2"]


def _block_tail(t: Tensor, params: ModelParams, prefix: str, eps: float) -> Tensor:
    """Post-attention tail in token layout: LN, FFN + residual, LN."""
    y = nm.layer_norm(t, params[f"{prefix}.ln1.g"], params[f"{prefix}.ln1.b"], eps)
    z = y + _ffn(y, params, prefix)
    return nm.layer_norm(z, params[f"{prefix}.ln2.g"], params[f"{prefix}.ln2.b"], eps)


# ---------------------------------------------------------------------------
# network stages


def encode_shallow(image: Tensor, modality: str, params: ModelParams, cfg: ModelConfig) -> Tensor:
    """[1,H,W] -> [C,H,W] shallow features for one modality."""
    if image.ndim != 3 or image.shape[0] != 1:
        raise ValueError("encode_shallow expects a [1,H,W] tensor")
    _check_extents(image, cfg.patch)
    y = nm.conv2d(image, params[f"enc.{modality}.conv1.w"], params[f"enc.{modality}.conv1.b"])
    y = nm.leaky_relu(y, cfg.leaky_slope)
    y = nm.conv2d(y, params[f"enc.{modality}.conv2.w"], params[f"enc.{modality}.conv2.b"])
    return nm.leaky_relu(y, cfg.leaky_slope)


def _mca_attend(
    x_self: Tensor,
    x_other: Tensor,
    modality: str,
    params: ModelParams,
    cfg: ModelConfig,
    record: bool,
):
    """Channel attention in window-channel layout; returns pre-norm residual sum."""
    c, h, w = x_self.shape
    p = cfg.patch
    cw_self = to_tokens(x_self, p).transpose(0, 2, 1)
    cw_other = to_tokens(x_other, p).transpose(0, 2, 1)
    q = nm.matmul(params[f"mca.{modality}.wq"], cw_self)
    k = nm.matmul(params[f"mca.{modality}.wk"], cw_other)
    v = nm.matmul(params[f"mca.{modality}.wv"], cw_other)
    out, probs = _attend(q, k, v, cfg.heads, record)
    return out + cw_self, probs


def channel_cross_attention(
    x_ir: Tensor,
    x_vi: Tensor,
    params: ModelParams,
    cfg: ModelConfig,
    attention: dict | None = None,
):
    """Inter-modality channel attention; Q from self, K and V from the other."""
    if x_ir.shape != x_vi.shape:
        raise ValueError("modality feature shapes differ")
    record = attention is not None
    _, h, w = x_ir.shape
    outs = {}
    for modality, x_self, x_other in (("ir", x_ir, x_vi), ("vi", x_vi, x_ir)):
        res, probs = _mca_attend(x_self, x_other, modality, params, cfg, record)
        tokens = res.transpose(0, 2, 1)
        z = _block_tail(tokens, params, f"mca.{modality}", cfg.ln_eps)
        outs[modality] = from_tokens(z, cfg.patch, h, w)
        if record:
            attention[f"mca.{modality}"] = probs
    return outs["ir"], outs["vi"]


def token_self_attention(
    x: Tensor,
    modality: str,
    params: ModelParams,
    cfg: ModelConfig,
    attention: dict | None = None,
) -> Tensor:
    """Window self-attention over patch^2 pixel tokens with C-dim features."""
    record = attention is not None
    _, h, w = x.shape
    t = to_tokens(x, cfg.patch)
    q = nm.matmul(t, params[f"msa.{modality}.wq"])
    k = nm.matmul(t, params[f"msa.{modality}.wk"])
    v = nm.matmul(t, params[f"msa.{modality}.wv"])
    out, probs = _attend(q, k, v, cfg.heads, record)
    z = _block_tail(out + t, params, f"msa.{modality}", cfg.ln_eps)
    if record:
        attention[f"msa.{modality}"] = probs
    return from_tokens(z, cfg.patch, h, w)


def align_entities(entity_feats: Tensor, params: ModelParams) -> Tensor:
    """[E, 768] raw embeddings -> [E, C] via the shared alignment FC."""
    return nm.matmul(entity_feats, params["ent.proj.w"]) + params["ent.proj.b"]


def cgha(
    x: Tensor,
    entity_aligned: Tensor,
    modality: str,
    params: ModelParams,
    cfg: ModelConfig,
    attention: dict | None = None,
):
    """Two-stage entity-guided attention for one modality.

    Stage 1: visual tokens query the E aligned entities (weights T x E).
    Stage 2: the stage-1 output queries the original visual tokens
    (weights T x T).  Returns (stage-2 map, stage-1 map), both [C,H,W].
    """
    if entity_aligned.shape[0] < 1:
        raise ValueError("entity-guided attention needs at least one entity")
    record = attention is not None
    _, h, w = x.shape
    if cfg.attention_scope == "global":
        t = _to_global_tokens(x)
    else:
        t = to_tokens(x, cfg.patch)

    ke = nm.matmul(entity_aligned, params["cgha.ent.wk"])
    ve = nm.matmul(entity_aligned, params["cgha.ent.wv"])
    e, c = ke.shape
    q1 = nm.matmul(t, params[f"cgha.{modality}.s1.wq"])
    out1, p1 = _attend(q1, ke.reshape(1, e, c), ve.reshape(1, e, c), cfg.heads, record)
    stage1 = _block_tail(out1 + t, params, f"cgha.{modality}.s1", cfg.ln_eps)

    q2 = nm.matmul(stage1, params[f"cgha.{modality}.s2.wq"])
    k2 = nm.matmul(t, params[f"cgha.{modality}.s2.wk"])
    v2 = nm.matmul(t, params[f"cgha.{modality}.s2.wv"])
    out2, p2 = _attend(q2, k2, v2, cfg.heads, record)
    stage2 = _block_tail(out2 + stage1, params, f"cgha.{modality}.s2", cfg.ln_eps)

    if record:
        attention[f"cgha.{modality}.s1"] = p1
        attention[f"cgha.{modality}.s2"] = p2
    if cfg.attention_scope == "global":
        return _from_global_tokens(stage2, h, w), _from_global_tokens(stage1, h, w)
    return from_tokens(stage2, cfg.patch, h, w), from_tokens(stage1, cfg.patch, h, w)


def assemble_shared(x_ir: Tensor, x_vi: Tensor) -> Tensor:
    """Channel concatenation, infrared first: 2 x [C,H,W] -> [2C,H,W]."""
    if x_ir.shape != x_vi.shape:
        raise ValueError("modality feature shapes differ")
    return nm.concat([x_ir, x_vi], axis=0)


def reconstruct(shared: Tensor, params: ModelParams, cfg: ModelConfig, training: bool) -> Tensor:
    """[2C,H,W] -> fused [1,H,W]; clamped to [0,1] at inference only."""
    if shared.shape[0] != 2 * cfg.shallow_channels:
        raise ValueError(f"reconstructor expects {2 * cfg.shallow_channels} channels")
    y = nm.leaky_relu(
        nm.conv2d(shared, params["recon.conv1.w"], params["recon.conv1.b"]), cfg.leaky_slope
    )
    y = nm.leaky_relu(
        nm.conv2d(y, params["recon.conv2.w"], params["recon.conv2.b"]), cfg.leaky_slope
    )
    y = nm.conv2d(y, params["recon.conv3.w"], params["recon.conv3.b"])
    if not training:
        y = nm.clip(y, 0.0, 1.0)
    return y


def classify(
    shared: Tensor,
    entity_feats: Tensor | None,
    params: ModelParams,
    cfg: ModelConfig,
    training: bool,
    rng: Rng | None,
) -> Tensor:
    """Multi-label probabilities from the shared representation.

    With entities present: raw [E,768] features are aligned to [E,C],
    randomly zeroed entry-wise during training (probability mask_ratio,
    no survivor rescaling), mean-pooled over entities to a modulation
    vector, tiled across both modality halves and multiplied into the
    shared map.  Then global max pool over H,W and a sigmoid FC head.
    """
    c2 = shared.shape[0]
    if entity_feats is not None:
        aligned = align_entities(entity_feats, params)
        if training and cfg.mask_ratio > 0.0:
            if rng is None:
                raise ValueError("training-time masking needs an rng")
            keep = rng.bernoulli(1.0 - cfg.mask_ratio, aligned.shape, dtype=aligned.data.dtype)
            aligned = aligned * Tensor(keep)
        modulation = aligned.mean(axis=0)
        tiled = nm.concat([modulation, modulation], axis=0)
        shared = shared * tiled.reshape(c2, 1, 1)
    pooled = shared.reshape(c2, -1).max(axis=1)
    logits = nm.matmul(pooled.reshape(1, c2), params["cls.fc.w"]).reshape(-1) + params["cls.fc.b"]
    return nm.sigmoid(logits)


def forward_full(
    sample,
    params: ModelParams,
    cfg: ModelConfig,
    training: bool,
    rng: Rng | None = None,
    record_attn: bool = False,
) -> ForwardTrace:
    """Run the whole network on one sample, honoring ablation flags.

    ``sample`` provides ``ir`` and ``vi_y`` ([1,H,W] tensors in [0,1])
    plus ``annotation`` when entity guidance is enabled.
    """
    attention: dict | None = {} if record_attn else None
    s_ir = encode_shallow(sample.ir, "ir", params, cfg)
    s_vi = encode_shallow(sample.vi_y, "vi", params, cfg)

    entity_feats = None
    entity_aligned = None
    if cfg.use_text:
        ents = canonical_entity_order(dedupe_entities(sample.annotation.entities))
        if not ents:
            raise ValueError(f"sample {getattr(sample, 'id', '?')}: no entities after dedup")
        entity_feats = Tensor(stack_entity_features(ents, dtype=cfg.np_dtype))
        entity_aligned = align_entities(entity_feats, params)

    if cfg.use_ca:
        c_ir, c_vi = channel_cross_attention(s_ir, s_vi, params, cfg, attention)
    else:
        c_ir, c_vi = s_ir, s_vi

    if cfg.use_ta:
        t_ir = token_self_attention(c_ir, "ir", params, cfg, attention)
        t_vi = token_self_attention(c_vi, "vi", params, cfg, attention)
    else:
        t_ir, t_vi = c_ir, c_vi

    ctx_ir = ctx_vi = None
    if cfg.use_cgha and cfg.use_text:
        g_ir, ctx_ir = cgha(t_ir, entity_aligned, "ir", params, cfg, attention)
        g_vi, ctx_vi = cgha(t_vi, entity_aligned, "vi", params, cfg, attention)
    else:
        g_ir, g_vi = t_ir, t_vi

    shared = assemble_shared(g_ir, g_vi)
    fused = reconstruct(shared, params, cfg, training)
    probs = classify(shared, entity_feats, params, cfg, training, rng)

    return ForwardTrace(
        shallow_ir=s_ir,
        shallow_vi=s_vi,
        channel_ir=c_ir,
        channel_vi=c_vi,
        token_ir=t_ir,
        token_vi=t_vi,
        entity_ctx_ir=ctx_ir,
        entity_ctx_vi=ctx_vi,
        guided_ir=g_ir,
        guided_vi=g_vi,
        shared=shared,
        fused=fused,
        probs=probs,
        attention=attention or {},
    )
