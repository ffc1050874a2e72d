"""Model hyperparameters and ablation switches."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

import numpy as np

__all__ = ["ModelConfig"]


@dataclass(frozen=True)
class ModelConfig:
    """Architecture configuration.

    The defaults are the trained configuration: 16x16 windows, 32 shallow
    channels per modality, 4 attention heads, reconstructor narrowing
    64:32, 32:16, 16:1.  Ablation flags disable individual stages:
    ``use_ca`` the channel cross-attention, ``use_ta`` the token
    self-attention, ``use_cgha`` the entity-guided hybrid attention, and
    ``use_text`` all entity injection (with it off, the classifier pools
    the raw shared representation and annotations are never read).

    ``attention_scope`` selects whether the entity-guided stage runs per
    window ("window") or over the globally flattened token sequence
    ("global").  Global scope squares the full token count in its second
    stage, which is only tractable for small inputs; window scope is the
    default and is what the 448-crop training pipeline uses.
    """

    shallow_channels: int = 32
    patch: int = 16
    heads: int = 4
    ffn_expansion: int = 2
    entity_dim: int = 768
    num_labels: int = 9
    mask_ratio: float = 0.6
    leaky_slope: float = 0.2
    use_ca: bool = True
    use_ta: bool = True
    use_cgha: bool = True
    use_text: bool = True
    attention_scope: str = "window"
    ln_eps: float = 1e-5
    dtype: str = "float64"

    def __post_init__(self):
        c, h, p = self.shallow_channels, self.heads, self.patch
        if c <= 0 or h <= 0 or p <= 0:
            raise ValueError("channels, heads and patch must be positive")
        if c % 2 != 0:
            raise ValueError("shallow_channels must be even (encoder + reconstructor halve it)")
        if c % h != 0:
            raise ValueError(f"channels ({c}) must be divisible by heads ({h})")
        if (p * p) % h != 0:
            raise ValueError(f"patch^2 ({p * p}) must be divisible by heads ({h})")
        if not 0.0 <= self.mask_ratio < 1.0:
            raise ValueError("mask_ratio must be in [0, 1)")
        if self.num_labels < 1:
            raise ValueError("num_labels must be at least 1")
        if self.attention_scope not in ("window", "global"):
            raise ValueError("attention_scope must be 'window' or 'global'")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be 'float32' or 'float64'")
        if self.ffn_expansion < 1:
            raise ValueError("ffn_expansion must be at least 1")

    @property
    def head_dim(self) -> int:
        """Per-head feature size for token attention (d_k)."""
        return self.shallow_channels // self.heads

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**doc)
