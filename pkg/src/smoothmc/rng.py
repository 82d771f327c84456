"""Seeded, platform-independent random streams.

Every random draw in the package goes through :class:`Rng`, a thin wrapper
around the PCG64 bit generator. Only the raw 64-bit output of PCG64 is used;
uniforms, Gaussians and subsets are derived here with fixed transforms so the
streams do not depend on numpy's distribution code, which is not covered by
numpy's stream-compatibility guarantee.

Transforms
----------
uniform
    ``(raw >> 11) * 2**-53``, a double in [0, 1).
normal
    Box-Muller on consecutive uniform pairs ``(u1, u2)``:
    ``r = sqrt(-2 log(1 - u1))``, emitting ``r cos(2 pi u2)`` then
    ``r sin(2 pi u2)``.
integers below ``k``
    ``floor(u * k)`` with ``u`` uniform (bias below ``k / 2**53``).

Seed splitting
--------------
``Rng(seed).spawn(*keys)`` builds a child stream from
``SeedSequence(entropy=seed, spawn_key=keys)``. Children with different key
tuples are statistically independent, and the rule does not depend on call
order, so parallel workers can derive their streams locally.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Rng", "as_rng"]

_MASK64 = (1 << 64) - 1


class Rng:
    """Deterministic random stream identified by ``(seed, keys)``.

    Parameters
    ----------
    seed : int
        64-bit seed. Negative values are reduced modulo ``2**64``.
    keys : tuple of int, optional
        Stream identifier appended as the SeedSequence spawn key.
    """

    def __init__(self, seed: int = 0, keys: tuple[int, ...] = ()):
        self.seed = int(seed) & _MASK64
        self.keys = tuple(int(k) & _MASK64 for k in keys)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.keys)
        self._bitgen = np.random.PCG64(ss)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, keys={self.keys})"

    def spawn(self, *keys: int) -> "Rng":
        """Child stream for ``keys``; independent of this stream's state."""
        return Rng(self.seed, self.keys + tuple(keys))

    def raw(self, size: int) -> np.ndarray:
        return self._bitgen.random_raw(int(size)).astype(np.uint64, copy=False)

    def uniform(self, size: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        u = (self.raw(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        if low == 0.0 and high == 1.0:
            return u
        return low + (high - low) * u

    def normal(self, size: int, scale: float = 1.0) -> np.ndarray:
        size = int(size)
        pairs = (size + 1) // 2
        u = self.uniform(2 * pairs).reshape(pairs, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        angle = 2.0 * np.pi * u[:, 1]
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(angle)
        z[:, 1] = r * np.sin(angle)
        out = z.reshape(-1)[:size]
        return out * scale if scale != 1.0 else out

    def integers(self, high: int, size: int) -> np.ndarray:
        """Uniform integers in ``[0, high)``."""
        if high < 1:
            raise ValueError(f"high must be >= 1, got {high}")
        idx = np.floor(self.uniform(size) * high).astype(np.int64)
        return np.minimum(idx, high - 1)

    def choice_without_replacement(self, population: int, k: int) -> np.ndarray:
        """Uniform random ``k``-subset of ``range(population)``, in draw order.

        Implemented as a random permutation via stable argsort of uniform keys.
        """
        if not 0 <= k <= population:
            raise ValueError(f"cannot draw {k} distinct items from {population}")
        keys = self.uniform(population)
        return np.argsort(keys, kind="stable")[:k].astype(np.int64)

    def bits(self, size: int) -> np.ndarray:
        """Uniform {0, 1} array (top bit of each raw draw)."""
        return (self.raw(size) >> np.uint64(63)).astype(np.uint8)


def as_rng(rng) -> Rng:
    """Coerce ``None``, an int seed or an :class:`Rng` into an :class:`Rng`."""
    if isinstance(rng, Rng):
        return rng
    if rng is None:
        return Rng(0)
    if isinstance(rng, (int, np.integer)):
        return Rng(int(rng))
    raise TypeError(f"expected Rng, int seed or None, got {type(rng).__name__}")
