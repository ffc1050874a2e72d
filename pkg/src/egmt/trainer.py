"""Optimization loop: Adam over all parameters, loss logging, checkpoints.

The loop is deliberately plain: epochs x shuffled batches, batch loss =
mean over samples, one Adam step per batch.  Every parameter trains,
including the two task-balance scalars.  There is no schedule, weight
decay, or early stopping; gradient clipping exists behind ``clip_norm``
and is off by default.

Determinism contract: given (seed, dataset, configs), the parameter
trajectory, the loss log, and every checkpoint byte are reproducible.
All randomness flows from child streams of the seed - batch order from
("shuffle", epoch), the classifier entity mask from ("mask", step) - so
resuming state needs only integers, never opaque generator snapshots.

Checkpoints are single-file containers holding the parameters, both
Adam moment sets, and JSON metadata (configs, seed, step).  Values are
stored as float32 per the tensor format; loading casts back to the
compute dtype, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .data_pipeline import DataError, batch_iter, load_pair, recolor, save_image
from .losses import LossConfig, total_loss
from .model import ModelConfig, ModelParams, forward_full, init_params
from .numerics import Rng, Tensor
from .numerics.serialize import read_container, write_container
from .numerics.tensor import no_grad

__all__ = [
    "LOG_COLUMNS",
    "NumericError",
    "TrainConfig",
    "TrainState",
    "adam_step",
    "clip_gradients",
    "fuse_sample",
    "fuse_inference",
    "init_state",
    "load_checkpoint",
    "save_checkpoint",
    "train",
]

LOG_COLUMNS = [
    "step",
    "L_total",
    "L_fus",
    "L_int",
    "L_edge",
    "L_ssim",
    "L_cla",
    "lambda1",
    "lambda2",
    "w1",
    "w2",
]


class NumericError(RuntimeError):
    """Raised when optimization hits non-finite numbers."""


@dataclass(frozen=True)
class TrainConfig:
    """Optimizer and loop settings.

    The ablation switches mirror the architecture flags plus ``use_mt``;
    ``train`` projects the architectural four onto the model config so a
    single flag set steers a whole run.  ``use_mt`` (or ``use_text``)
    off pins the task balance to (1, 0) and keeps the classification
    term out of the objective entirely.
    """

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 20
    batch: int = 4
    seed: int = 0
    checkpoint_every: int = 0
    clip_norm: float | None = None
    use_ca: bool = True
    use_ta: bool = True
    use_cgha: bool = True
    use_text: bool = True
    use_mt: bool = True

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if self.checkpoint_every < 0:
            raise ValueError("checkpoint_every must be >= 0 (0 = final only)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive when set")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**doc)

    def apply_ablations(self, cfg: ModelConfig) -> ModelConfig:
        return replace(
            cfg,
            use_ca=self.use_ca,
            use_ta=self.use_ta,
            use_cgha=self.use_cgha,
            use_text=self.use_text,
        )


@dataclass
class TrainState:
    """Everything Adam needs to continue: step count, parameters, moments."""

    step: int
    params: ModelParams
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    seed: int


def init_state(params: ModelParams, seed: int) -> TrainState:
    m = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}
    v = {name: np.zeros_like(t.data) for name, t in params.tensors.items()}
    return TrainState(step=0, params=params, m=m, v=v, seed=seed)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the pre-clip norm.
    """
    sq = 0.0
    for g in grads.values():
        sq += float(np.sum(g * g))
    norm = math.sqrt(sq)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


def adam_step(state: TrainState, grads: dict[str, np.ndarray], cfg: TrainConfig) -> TrainState:
    """One bias-corrected Adam update over every parameter, in place."""
    for name in state.params.tensors:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in {name!r} at step {state.step + 1}")
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name, p in state.params.tensors.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        p.data -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return state


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(
    path,
    state: TrainState,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig | None = None,
) -> None:
    tensors = {name: t.data for name, t in state.params.tensors.items()}
    for name, m in state.m.items():
        tensors[f"adam.m.{name}"] = m
    for name, v in state.v.items():
        tensors[f"adam.v.{name}"] = v
    meta = {
        "kind": "checkpoint",
        "step": state.step,
        "seed": state.seed,
        "model_config": model_cfg.to_dict(),
        "train_config": train_cfg.to_dict() if train_cfg is not None else None,
    }
    write_container(path, tensors, meta)


def load_checkpoint(path) -> tuple[TrainState, ModelConfig, TrainConfig | None]:
    arrays, meta = read_container(path)
    if meta.get("kind") != "checkpoint":
        raise DataError(f"{path} is not a training checkpoint")
    model_cfg = ModelConfig.from_dict(meta["model_config"])
    train_cfg = (
        TrainConfig.from_dict(meta["train_config"]) if meta.get("train_config") else None
    )
    dt = model_cfg.np_dtype
    params = init_params(model_cfg, Rng(int(meta.get("seed", 0))))
    param_arrays = {}
    for name in params.names():
        if name not in arrays:
            raise DataError(f"checkpoint missing tensor {name!r}")
        param_arrays[name] = arrays[name].astype(dt)
    params.load_arrays(param_arrays)
    m = {}
    v = {}
    for name in params.names():
        m[name] = arrays.get(f"adam.m.{name}", np.zeros(params[name].shape)).astype(dt)
        v[name] = arrays.get(f"adam.v.{name}", np.zeros(params[name].shape)).astype(dt)
        if m[name].shape != params[name].shape or v[name].shape != params[name].shape:
            raise DataError(f"optimizer moment shape mismatch for {name!r}")
    state = TrainState(step=int(meta["step"]), params=params, m=m, v=v, seed=int(meta["seed"]))
    return state, model_cfg, train_cfg


# ---------------------------------------------------------------------------
# training loop


def _format_row(values: dict) -> str:
    cells = [str(int(values["step"]))]
    cells += [f"{float(values[c]):.12e}" for c in LOG_COLUMNS[1:]]
    return ",".join(cells)


def train(
    manifest,
    model_cfg: ModelConfig,
    train_cfg: TrainConfig,
    out_dir,
    vocab=None,
    loss_cfg: LossConfig | None = None,
) -> tuple[Path, Path]:
    """Run the full loop; returns (final checkpoint path, loss log path).

    ``manifest`` is a DatasetManifest whose entries are the training
    samples (typically pre-cropped patches).  The loss log gains one CSV
    row per optimizer step and is append-only; checkpoints land in
    ``out_dir`` every ``checkpoint_every`` steps (0 = final only).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_cfg = train_cfg.apply_ablations(model_cfg)
    loss_cfg = loss_cfg if loss_cfg is not None else LossConfig()
    multitask = train_cfg.use_mt and model_cfg.use_text

    samples = manifest.load_samples(vocab, dtype=model_cfg.np_dtype)
    params = init_params(model_cfg, Rng(train_cfg.seed))
    state = init_state(params, train_cfg.seed)
    base_rng = Rng(train_cfg.seed)

    log_path = out_dir / "loss_log.csv"
    write_header = not log_path.exists()
    final_path = out_dir / "checkpoint_final.egtc"
    with open(log_path, "a", encoding="utf-8") as log:
        if write_header:
            log.write(",".join(LOG_COLUMNS) + "\n")
        for epoch in range(train_cfg.epochs):
            for batch in batch_iter(samples, train_cfg.batch, train_cfg.seed, epoch):
                mask_rng = base_rng.child("mask", state.step)
                params.zero_grads()
                batch_loss = None
                sums = dict.fromkeys(LOG_COLUMNS[1:], 0.0)
                for sample in batch:
                    trace = forward_full(
                        sample, params, model_cfg, training=True, rng=mask_rng
                    )
                    loss, parts = total_loss(trace, sample, params, loss_cfg, multitask)
                    batch_loss = loss if batch_loss is None else batch_loss + loss
                    for key in sums:
                        sums[key] += parts[key]
                (batch_loss / float(len(batch))).backward()
                grads = {
                    name: (t.grad if t.grad is not None else np.zeros_like(t.data))
                    for name, t in params.tensors.items()
                }
                if train_cfg.clip_norm is not None:
                    clip_gradients(grads, train_cfg.clip_norm)
                adam_step(state, grads, train_cfg)
                row = {k: s / len(batch) for k, s in sums.items()}
                row["step"] = state.step
                log.write(_format_row(row) + "\n")
                if train_cfg.checkpoint_every and state.step % train_cfg.checkpoint_every == 0:
                    save_checkpoint(
                        out_dir / f"checkpoint_{state.step:06d}.egtc",
                        state,
                        model_cfg,
                        train_cfg,
                    )
    save_checkpoint(final_path, state, model_cfg, train_cfg)
    return final_path, log_path


# ---------------------------------------------------------------------------
# inference


def _pad_reflect(arr: np.ndarray, top: int, bottom: int, left: int, right: int) -> np.ndarray:
    pads = [(0, 0)] * (arr.ndim - 2) + [(top, bottom), (left, right)]
    return np.pad(arr, pads, mode="reflect")


def fuse_sample(sample, params: ModelParams, cfg: ModelConfig) -> np.ndarray:
    """Fuse one pair at inference; returns the [H, W] luminance.

    Extents that are multiples of the window size run whole; anything
    else is reflect-padded up to the next multiple (split evenly, extra
    on the bottom/right) and the result cropped back, so the output
    always matches the input extents.
    """
    mult = math.lcm(16, cfg.patch)
    h, w = sample.ir.shape[-2:]
    with no_grad():
        if h % mult == 0 and w % mult == 0:
            return forward_full(sample, params, cfg, training=False).fused.data[0]
        ph = (mult - h % mult) % mult
        pw = (mult - w % mult) % mult
        top, left = ph // 2, pw // 2
        if max(ph, pw) > min(h, w) - 1:
            raise DataError(f"image {h}x{w} too small to pad to a multiple of {mult}")
        padded = replace(
            sample,
            ir=Tensor(_pad_reflect(sample.ir.data, top, ph - top, left, pw - left)),
            vi_y=Tensor(_pad_reflect(sample.vi_y.data, top, ph - top, left, pw - left)),
            vi_cbcr=None,
        )
        fused = forward_full(padded, params, cfg, training=False).fused.data[0]
    return fused[top : top + h, left : left + w]


def fuse_inference(
    checkpoint_path,
    manifest,
    out_dir,
    vocab=None,
    color: bool = True,
) -> list[Path]:
    """Write <stem>_fused.png for every manifest entry; returns the paths."""
    state, model_cfg, _ = load_checkpoint(checkpoint_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for entry in manifest.entries:
        sample = _load_entry(manifest, entry, vocab, model_cfg)
        fused = fuse_sample(sample, state.params, model_cfg)
        target = out_dir / f"{sample.id}_fused.png"
        if color and sample.vi_cbcr is not None:
            save_image(target, recolor(fused, sample.vi_cbcr))
        else:
            save_image(target, np.clip(fused, 0.0, 1.0))
        written.append(target)
    return written


def _load_entry(manifest, entry, vocab, model_cfg: ModelConfig):
    try:
        return load_pair(entry, manifest.base, vocab, dtype=model_cfg.np_dtype)
    except DataError:
        raise
    except OSError as exc:
        raise DataError(f"entry {entry.get('ir_path', '?')}: {exc}") from exc
