"""Counter-style splitmix64 streams usable from numba kernels.

Every stream is a single uint64 word kept in an array slot, so many
independent streams (one per document) can live in one ndarray.
"""
from __future__ import annotations

import hashlib

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0


@nb.njit(cache=True)
def next_u64(states, i):
    s = states[i] + _GOLDEN
    states[i] = s
    z = s
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@nb.njit(cache=True)
def next_float(states, i):
    """Uniform double in [0, 1)."""
    return float(next_u64(states, i) >> _S11) * _INV53


def stream_seed(seed: int, key: str) -> np.uint64:
    """Derive a stream state from a global seed and a string key."""
    digest = hashlib.blake2b(f"{int(seed)}\x1f{key}".encode(), digest_size=8).digest()
    return np.uint64(int.from_bytes(digest, "little"))


def stream_states(seed: int, keys) -> np.ndarray:
    return np.array([stream_seed(seed, k) for k in keys], dtype=np.uint64)
