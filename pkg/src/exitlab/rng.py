"""Counter-based Philox4x64-10 generator usable from numba kernels.

Every random draw in the package is a pure function of
``(seed, index, substream, counter)``: a trajectory owns the key
``(seed, 4 * index + substream)`` and consumes blocks of four 64-bit words
by incrementing a block counter.  Nothing is shared between trajectories, so
batches can be evaluated in any order (or in parallel) with identical output.

The block function matches ``numpy.random.Philox`` bit for bit (numpy
pre-increments its counter, so numpy's block ``j`` is our block ``j + 1``).
"""
import math

import numpy as np
from numba import njit

CHAIN = 0
WIENER = 1
INIT = 2

_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)
_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_TO_UNIT = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def _mulhilo(a, b):
    a_lo = a & _MASK32
    a_hi = a >> _SHIFT32
    b_lo = b & _MASK32
    b_hi = b >> _SHIFT32
    lo_lo = a_lo * b_lo
    hi_lo = a_hi * b_lo
    lo_hi = a_lo * b_hi
    hi_hi = a_hi * b_hi
    cross = (lo_lo >> _SHIFT32) + (hi_lo & _MASK32) + lo_hi
    hi = hi_hi + (hi_lo >> _SHIFT32) + (cross >> _SHIFT32)
    return hi, a * b


@njit(cache=True)
def philox_block(c0, c1, c2, c3, k0, k1):
    """Ten Philox4x64 rounds on counter ``(c0..c3)`` under key ``(k0, k1)``."""
    for _ in range(10):
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        k0 = k0 + _W0
        k1 = k1 + _W1
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def to_unit(word):
    """Map a 64-bit word to a double in the open interval (0, 1)."""
    return (float(word >> np.uint64(11)) + 0.5) * _TO_UNIT


@njit(cache=True)
def uniform_block(k0, k1, block, out):
    """Fill ``out[0:4]`` with four uniforms from counter ``block``."""
    r0, r1, r2, r3 = philox_block(np.uint64(block), np.uint64(0), np.uint64(0), np.uint64(0), k0, k1)
    out[0] = to_unit(r0)
    out[1] = to_unit(r1)
    out[2] = to_unit(r2)
    out[3] = to_unit(r3)


@njit(cache=True)
def normal_block(k0, k1, block, out):
    """Fill ``out[0:4]`` with four standard normals (Box-Muller)."""
    r0, r1, r2, r3 = philox_block(np.uint64(block), np.uint64(0), np.uint64(0), np.uint64(0), k0, k1)
    u0 = to_unit(r0)
    u1 = to_unit(r1)
    u2 = to_unit(r2)
    u3 = to_unit(r3)
    rad = math.sqrt(-2.0 * math.log(u0))
    out[0] = rad * math.cos(2.0 * math.pi * u1)
    out[1] = rad * math.sin(2.0 * math.pi * u1)
    rad = math.sqrt(-2.0 * math.log(u2))
    out[2] = rad * math.cos(2.0 * math.pi * u3)
    out[3] = rad * math.sin(2.0 * math.pi * u3)


def stream_key(seed, index, substream):
    """Key words for trajectory ``index`` in ``substream`` under ``seed``."""
    if seed < 0 or index < 0:
        raise ValueError("seed and index must be nonnegative")
    return np.uint64(seed % 2**64), np.uint64((4 * index + substream) % 2**64)


class UniformStream:
    """Sequential uniform draws from one Philox stream (Python side)."""

    def __init__(self, seed, index=0, substream=CHAIN):
        self.k0, self.k1 = stream_key(seed, index, substream)
        self._buf = np.empty(4)
        self._pos = 4
        self._block = 0

    def uniform(self):
        if self._pos == 4:
            uniform_block(self.k0, self.k1, self._block, self._buf)
            self._block += 1
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return float(u)
