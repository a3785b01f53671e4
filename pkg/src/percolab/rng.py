"""
Counter-based per-edge randomness.

The uniform variate of an edge in sample ``i`` is a pure function of
``(seed, i, edge key)``; the edge key is a hash of the edge's canonical
(lexicographically ordered) endpoint coordinates. Draws therefore do not
depend on iteration order, worker count, or the box the edge is seen in,
which couples configurations across beta and across nested boxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_KEY0 = np.uint64(0x6A09E667F3BCC909)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_UNIT = 1.0 / 9007199254740992.0  # 2**-53

MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngSeed:
    """Base seed plus the first stream (sample) index."""

    seed: int
    stream: int = 0

    def __post_init__(self):
        for name in ("seed", "stream"):
            v = getattr(self, name)
            if not (0 <= int(v) <= MASK64):
                raise ValueError(f"{name} must be an unsigned 64-bit integer, got {v!r}")

    def offset(self, label: int) -> "RngSeed":
        """Derive an independent base seed for a labelled sub-experiment."""
        return RngSeed(int(mix64(np.uint64(self.seed) ^ np.uint64(label))), self.stream)


@nb.njit(cache=True, nogil=True)
def mix64(z):
    z = np.uint64(z) + _GOLDEN
    z = (z ^ (z >> _S30)) * _M1
    z = (z ^ (z >> _S27)) * _M2
    return z ^ (z >> _S31)


@nb.njit(cache=True, nogil=True)
def sample_base(seed, stream):
    return mix64(mix64(np.uint64(seed)) ^ np.uint64(stream))


@nb.njit(cache=True, nogil=True)
def edge_key(a, b):
    """Key of the unordered edge {a, b}; ``a`` and ``b`` are int64 coordinate arrays."""
    swap = False
    for i in range(a.shape[0]):
        if a[i] != b[i]:
            swap = b[i] < a[i]
            break
    h = _KEY0
    if swap:
        for i in range(b.shape[0]):
            h = mix64(h ^ np.uint64(b[i]))
        for i in range(a.shape[0]):
            h = mix64(h ^ np.uint64(a[i]))
    else:
        for i in range(a.shape[0]):
            h = mix64(h ^ np.uint64(a[i]))
        for i in range(b.shape[0]):
            h = mix64(h ^ np.uint64(b[i]))
    return h


@nb.njit(cache=True, nogil=True)
def edge_uniform(base, key):
    """Uniform in [0, 1) for an edge key under a per-sample base."""
    return np.float64(mix64(base ^ key) >> _S11) * _UNIT


@nb.njit(cache=True, nogil=True)
def edge_keys(ends_a, ends_b):
    n = ends_a.shape[0]
    out = np.empty(n, dtype=np.uint64)
    for e in range(n):
        out[e] = edge_key(ends_a[e], ends_b[e])
    return out


@nb.njit(cache=True, nogil=True)
def open_mask(seed, stream, keys, probs):
    """Open/closed state of every edge for one sample."""
    base = sample_base(seed, stream)
    out = np.empty(keys.shape[0], dtype=np.bool_)
    for e in range(keys.shape[0]):
        out[e] = edge_uniform(base, keys[e]) < probs[e]
    return out
