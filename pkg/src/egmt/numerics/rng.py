"""Deterministic random numbers.

Every stochastic choice in the package flows through an :class:`Rng`
passed explicitly; nothing reads global numpy state.  The bit generator
is PCG64, so a given seed yields the same draw sequence on every
platform and run.  Child streams are derived from the parent's entropy
plus integer keys, which keeps, say, the epoch-3 shuffle independent of
how much randomness epoch 2 consumed.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Rng"]


def _fold_key(key) -> int:
    if isinstance(key, str):
        acc = 0
        for ch in key.encode("utf-8"):
            acc = (acc * 131 + ch) % (2**63)
        return acc
    return int(key)


class Rng:
    def __init__(self, seed: int, _entropy: tuple | None = None):
        if _entropy is None:
            _entropy = (int(seed),)
        self.entropy = _entropy
        self.seed = _entropy[0]
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(_entropy))))

    def child(self, *keys) -> "Rng":
        """Independent stream keyed by (this stream's entropy, *keys).

        Keys are ints or strings; strings are folded to a stable 63-bit
        value so the derivation never depends on Python's hash seed.
        """
        return Rng(self.seed, _entropy=self.entropy + tuple(_fold_key(k) for k in keys))

    # -- draws -------------------------------------------------------------

    def normal(self, shape, std: float = 1.0, mean: float = 0.0, dtype=np.float64) -> np.ndarray:
        return (mean + std * self._gen.standard_normal(shape)).astype(dtype)

    def uniform(self, shape, low: float = 0.0, high: float = 1.0, dtype=np.float64) -> np.ndarray:
        return self._gen.uniform(low, high, shape).astype(dtype)

    def bernoulli(self, p: float, shape, dtype=np.float64) -> np.ndarray:
        """Array of 0.0/1.0 with P(1) = p."""
        return (self._gen.random(shape) < p).astype(dtype)

    def integers(self, low: int, high: int, shape=None) -> np.ndarray:
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    # -- state (for checkpoints) -------------------------------------------

    def get_state(self) -> dict:
        return self._gen.bit_generator.state

    def set_state(self, state: dict) -> None:
        self._gen.bit_generator.state = state
