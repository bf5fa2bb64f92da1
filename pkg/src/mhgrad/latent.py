"""Counter-based latent randomness for alternative chains.

Every alternative chain owns a substream keyed by (chain key, birth index).
The k-th uniform of a substream is a pure function of (key, birth, k), so an
alternative can be replayed in isolation, alternatives never consume draws
from the primal stream, and the primal trajectory is bit-invariant to how
many alternatives are alive or pruned.

The generator is a splitmix64-style finalizer applied to the counter; it is
stateless, cheap, and vectorizes over whole pools of alternatives.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# 2^-53, so uniforms land in [0, 1) on the dyadic 53-bit grid; 0.0 is possible.
_INV53 = float(2.0**-53)


def _u64(v) -> np.ndarray:
    # at least 1-d: numpy wraps unsigned array arithmetic silently, while 0-d
    # and scalar uint64 ops raise overflow warnings
    return np.atleast_1d(np.asarray(v, dtype=np.uint64))


def mix64(v) -> np.ndarray:
    """splitmix64 finalizer, elementwise over uint64 input."""
    v = _u64(v) + _GAMMA
    v = (v ^ (v >> np.uint64(30))) * _MIX1
    v = (v ^ (v >> np.uint64(27))) * _MIX2
    return v ^ (v >> np.uint64(31))


def substream_key(chain_key, birth) -> np.ndarray:
    """Key of the substream owned by the alternative born at `birth`."""
    return mix64(_u64(chain_key) + mix64(birth))


def substream_uniform(key, k) -> np.ndarray:
    """k-th uniform [0, 1) of the substream(s) with the given key(s)."""
    bits = mix64(_u64(key) + mix64(k))
    return np.asarray(bits >> np.uint64(11), dtype=np.float64) * _INV53


def pool_uniform(key: np.ndarray, k: np.ndarray) -> np.ndarray:
    """substream_uniform for uint64 arrays, skipping input normalization."""
    v = k + _GAMMA
    v = (v ^ (v >> np.uint64(30))) * _MIX1
    v = (v ^ (v >> np.uint64(27))) * _MIX2
    v = key + (v ^ (v >> np.uint64(31))) + _GAMMA
    v = (v ^ (v >> np.uint64(30))) * _MIX1
    v = (v ^ (v >> np.uint64(27))) * _MIX2
    bits = v ^ (v >> np.uint64(31))
    return np.asarray(bits >> np.uint64(11), dtype=np.float64) * _INV53


class LatentStream:
    """Substream view for a single alternative: uniform(k) is stateless."""

    __slots__ = ("key",)

    def __init__(self, chain_key: int, birth: int):
        self.key = int(substream_key(chain_key, birth)[0])

    def uniform(self, k: int) -> float:
        """Uniform draw number k (the k-th coupled transition since birth)."""
        return float(substream_uniform(self.key, k)[0])
