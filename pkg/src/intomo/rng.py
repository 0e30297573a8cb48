"""PCG32 (XSH-RR 64/32) random generator.

Seeding follows the reference ``pcg32_srandom_r(initstate, initseq)``:
``state = 0; inc = (initseq << 1) | 1; step(); state += initstate; step()``.
The stream selector defaults to 54, matching the reference demo program,
so sequences can be reproduced by any other PCG32 implementation.
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
MULT = 6364136223846793005
DEFAULT_STREAM = 54


class PCG32:
    def __init__(self, seed: int, stream: int = DEFAULT_STREAM):
        self.state = 0
        self.inc = ((stream << 1) | 1) & MASK64
        self._step()
        self.state = (self.state + (seed & MASK64)) & MASK64
        self._step()
        self._spare = None

    def _step(self):
        self.state = (self.state * MULT + self.inc) & MASK64

    def next_u32(self) -> int:
        old = self.state
        self.state = (old * MULT + self.inc) & MASK64
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF

    def u32_array(self, count: int) -> np.ndarray:
        """``count`` consecutive outputs as a uint32 array."""
        from intomo._backend import kernels

        out, self.state = kernels.pcg32_fill(self.state, self.inc, count)
        return out

    def uniform(self) -> float:
        """Double in [0, 1) built from 53 random bits (two outputs)."""
        hi = self.next_u32() >> 5
        lo = self.next_u32() >> 6
        return (hi * 67108864.0 + lo) / 9007199254740992.0

    def uniform_range(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def bounded(self, bound: int) -> int:
        """Unbiased integer in [0, bound) by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = ((1 << 32) - bound) % bound
        while True:
            r = self.next_u32()
            if r >= threshold:
                return r % bound

    def normal(self) -> float:
        """Standard normal via Box-Muller; the second deviate is cached."""
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        self._spare = r * math.sin(2.0 * math.pi * u2)
        return r * math.cos(2.0 * math.pi * u2)

    def normal_array(self, count: int) -> np.ndarray:
        """``count`` standard normals, same sequence as repeated :meth:`normal`.

        Vectorized over Box-Muller pairs; consumes four outputs per pair.
        Mixing with scalar :meth:`normal` calls is not supported.
        """
        if self._spare is not None:
            raise RuntimeError("normal_array called with a cached scalar deviate")
        npairs = (count + 1) // 2
        raw = self.u32_array(4 * npairs).astype(np.uint64).reshape(npairs, 4)
        u1 = ((raw[:, 0] >> 5).astype(np.float64) * 67108864.0
              + (raw[:, 1] >> 6).astype(np.float64)) / 9007199254740992.0
        u2 = ((raw[:, 2] >> 5).astype(np.float64) * 67108864.0
              + (raw[:, 3] >> 6).astype(np.float64)) / 9007199254740992.0
        # u1 == 0 has probability 2**-53; the scalar path redraws, here we nudge
        u1 = np.where(u1 <= 0.0, 2.0 ** -53, u1)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * npairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        return z[:count]

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.bounded(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
