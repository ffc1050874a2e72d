"""Parameter construction, naming and checkpoint round-tripping.

Naming scheme (dots as separators, modality slot in braces):

    enc.{ir,vi}.conv1|conv2.w|b        shallow encoder convs
    mca.{ir,vi}.wq|wk|wv               channel cross-attention projections
    msa.{ir,vi}.wq|wk|wv               token self-attention projections
    cgha.{ir,vi}.s1.wq                 entity-guided stage 1 query
    cgha.ent.wk|wv                     stage 1 entity keys/values (shared)
    cgha.{ir,vi}.s2.wq|wk|wv           stage 2 (reverse) projections
    *.ln1|ln2.g|b, *.ffn.w1|b1|w2|b2   per-site layer norms and FFNs
    ent.proj.w|b                       entity alignment FC, 768 -> C
    recon.conv1|conv2|conv3.w|b        reconstructor 2C -> C -> C/2 -> 1
    cls.fc.w|b                         classifier FC, 2C -> num_labels
    task.w                             task-uncertainty scalars (2,)

Attention projections carry no bias (none appears in the attention
equations); convs, FFNs and FCs do.  Init: truncated normal sigma=0.02
(resampled beyond 2 sigma) for every weight matrix and conv kernel,
zeros for biases and the task scalars, ones for layer-norm gains.
"""

from __future__ import annotations

import numpy as np

from ..numerics import Rng, Tensor
from .config import ModelConfig

__all__ = ["ModelParams", "init_params", "trunc_normal"]

_MODALITIES = ("ir", "vi")


def trunc_normal(rng: Rng, shape, std: float = 0.02, dtype=np.float64) -> np.ndarray:
    """Normal(0, std) with draws beyond 2 std resampled."""
    out = rng.normal(shape, std=std, dtype=dtype)
    bound = 2.0 * std
    for _ in range(64):
        bad = np.abs(out) > bound
        if not bad.any():
            break
        out[bad] = rng.normal((int(bad.sum()),), std=std, dtype=dtype)
    return np.clip(out, -bound, bound)


class ModelParams:
    """Ordered name -> Tensor mapping with checkpoint helpers."""

    def __init__(self, tensors: dict[str, Tensor], config: ModelConfig):
        self.tensors = tensors
        self.config = config

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def names(self) -> list[str]:
        return list(self.tensors)

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grads(self) -> None:
        for t in self.tensors.values():
            t.grad = None

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: t.data for name, t in self.tensors.items()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        """Replace parameter values in place (shapes must match)."""
        missing = set(self.tensors) - set(arrays)
        extra = set(arrays) - set(self.tensors)
        if missing or extra:
            raise ValueError(
                f"parameter set mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}"
            )
        for name, t in self.tensors.items():
            arr = np.asarray(arrays[name], dtype=t.data.dtype)
            if arr.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {t.data.shape}")
            t.data = arr
            t.grad = None


def init_params(config: ModelConfig, rng: Rng) -> ModelParams:
    c = config.shallow_channels
    half = c // 2
    hidden = config.ffn_expansion * c
    dt = config.np_dtype
    order: list[tuple[str, tuple]] = []

    def weight(name, shape):
        order.append((name, ("w", shape)))

    def bias(name, shape):
        order.append((name, ("b", shape)))

    def gain(name, shape):
        order.append((name, ("g", shape)))

    def block_tail(prefix):
        gain(f"{prefix}.ln1.g", (c,))
        bias(f"{prefix}.ln1.b", (c,))
        weight(f"{prefix}.ffn.w1", (c, hidden))
        bias(f"{prefix}.ffn.b1", (hidden,))
        weight(f"{prefix}.ffn.w2", (hidden, c))
        bias(f"{prefix}.ffn.b2", (c,))
        gain(f"{prefix}.ln2.g", (c,))
        bias(f"{prefix}.ln2.b", (c,))

    for m in _MODALITIES:
        weight(f"enc.{m}.conv1.w", (half, 1, 3, 3))
        bias(f"enc.{m}.conv1.b", (half,))
        weight(f"enc.{m}.conv2.w", (c, half, 3, 3))
        bias(f"enc.{m}.conv2.b", (c,))

    for site in ("mca", "msa"):
        for m in _MODALITIES:
            for p in ("wq", "wk", "wv"):
                weight(f"{site}.{m}.{p}", (c, c))
            block_tail(f"{site}.{m}")

    weight("ent.proj.w", (config.entity_dim, c))
    bias("ent.proj.b", (c,))
    weight("cgha.ent.wk", (c, c))
    weight("cgha.ent.wv", (c, c))
    for m in _MODALITIES:
        weight(f"cgha.{m}.s1.wq", (c, c))
        block_tail(f"cgha.{m}.s1")
        for p in ("wq", "wk", "wv"):
            weight(f"cgha.{m}.s2.{p}", (c, c))
        block_tail(f"cgha.{m}.s2")

    weight("recon.conv1.w", (c, 2 * c, 3, 3))
    bias("recon.conv1.b", (c,))
    weight("recon.conv2.w", (half, c, 3, 3))
    bias("recon.conv2.b", (half,))
    weight("recon.conv3.w", (1, half, 1, 1))
    bias("recon.conv3.b", (1,))

    weight("cls.fc.w", (2 * c, config.num_labels))
    bias("cls.fc.b", (config.num_labels,))
    bias("task.w", (2,))

    tensors: dict[str, Tensor] = {}
    for name, (kind, shape) in order:
        if kind == "w":
            data = trunc_normal(rng.child(name), shape, dtype=dt)
        elif kind == "g":
            data = np.ones(shape, dtype=dt)
        else:
            data = np.zeros(shape, dtype=dt)
        tensors[name] = Tensor(data, requires_grad=True, name=name)
    return ModelParams(tensors, config)
