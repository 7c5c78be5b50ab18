"""Counter-based random numbers for reproducible parallel chains.

Every draw is a pure function of ``(key, counter)``: the key is derived from
the master seed and the chain id, the counter from (sweep, site, draw slot).
Nothing is carried between calls, so chains, sweeps and sites can be
replayed or reordered without coordinating streams.

The block cipher is Philox4x32-10 (Salmon et al., SC'11).
"""

from __future__ import annotations

import hashlib
import math

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox on a 128-bit counter; all inputs are uint64 < 2**32."""
    for r in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _SHIFT32
        lo0 = p0 & _MASK32
        hi1 = p1 >> _SHIFT32
        lo1 = p1 & _MASK32
        c0 = (hi1 ^ c1 ^ k0) & _MASK32
        c1 = lo1
        c2 = (hi0 ^ c3 ^ k1) & _MASK32
        c3 = lo0
        if r < 9:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def uniform_pair(k0, k1, sweep, site, slot):
    """Two independent doubles in [0, 1) for counter (sweep, site, slot)."""
    c0 = np.uint64(sweep) & _MASK32
    c1 = (np.uint64(sweep) >> _SHIFT32) & _MASK32
    r0, r1, r2, r3 = philox4x32(c0, c1, np.uint64(site) & _MASK32,
                                np.uint64(slot) & _MASK32, k0, k1)
    a = ((r0 << np.uint64(21)) ^ (r1 >> np.uint64(11))) & np.uint64(0x1FFFFFFFFFFFFF)
    b = ((r2 << np.uint64(21)) ^ (r3 >> np.uint64(11))) & np.uint64(0x1FFFFFFFFFFFFF)
    return float(a) * _INV53, float(b) * _INV53


@njit(cache=True, inline="always")
def normal_pair(k0, k1, sweep, site, slot):
    """Two independent standard normals (Box-Muller) for one counter."""
    u, v = uniform_pair(k0, k1, sweep, site, slot)
    r = math.sqrt(-2.0 * math.log1p(-u))
    return r * math.cos(2.0 * math.pi * v), r * math.sin(2.0 * math.pi * v)


def stream_key(seed: int, stream: int, tag: str = "") -> tuple[np.uint64, np.uint64]:
    """Philox key for ``(seed, stream)``, optionally namespaced by ``tag``.

    The pair is hashed so that nearby seeds and stream ids give unrelated keys.
    """
    h = hashlib.blake2b(f"{int(seed)}:{int(stream)}{tag}".encode(), digest_size=8).digest()
    word = int.from_bytes(h, "little")
    return np.uint64(word & 0xFFFFFFFF), np.uint64(word >> 32)


@njit(cache=True)
def _fill_uniform(k0, k1, sweep, out):
    n = out.size
    for i in range((n + 1) // 2):
        a, b = uniform_pair(k0, k1, sweep, i, 0)
        out[2 * i] = a
        if 2 * i + 1 < n:
            out[2 * i + 1] = b


@njit(cache=True)
def _fill_normal(k0, k1, sweep, out):
    n = out.size
    for i in range((n + 1) // 2):
        a, b = normal_pair(k0, k1, sweep, i, 0)
        out[2 * i] = a
        if 2 * i + 1 < n:
            out[2 * i + 1] = b


class CounterRNG:
    """Thin numpy-facing wrapper around one Philox key.

    Each call consumes one value of an internal block counter, so a sequence
    of calls is reproducible from ``(seed, stream)`` alone.
    """

    def __init__(self, seed: int, stream: int = 0, block: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)
        self.key = stream_key(seed, stream)
        self.block = int(block)

    def _next_block(self) -> int:
        b = self.block
        self.block += 1
        return b

    def uniform(self, size) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        _fill_uniform(self.key[0], self.key[1], self._next_block(), out.reshape(-1))
        return out

    def normal(self, size) -> np.ndarray:
        out = np.empty(size, dtype=np.float64)
        _fill_normal(self.key[0], self.key[1], self._next_block(), out.reshape(-1))
        return out

    def integers(self, high: int, size) -> np.ndarray:
        return np.minimum((self.uniform(size) * high).astype(np.int64), high - 1)

    def spawn(self, stream: int) -> "CounterRNG":
        """Child generator; children with different ids never share keys."""
        return CounterRNG(self.seed * 1_000_003 + self.stream, stream)
