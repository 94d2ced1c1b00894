"""Portable seedable random streams.

Monte Carlo traces are part of committed expected values, so the generator
must produce identical streams on every platform. This is a splitmix64
implementation; each stream is defined by (seed, stream index) and the t-th
draw of a stream is a pure function of those, which also lets simulation
batches be vectorised with numpy uint64 arithmetic.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64
_F53 = 1.0 / (1 << 53)

def _wrap():
    # numpy intentionally wraps uint64 arithmetic; silence the overflow
    # warnings locally rather than globally.
    return np.errstate(over="ignore")


def mix64(z):
    """splitmix64 finalizer; accepts scalars or uint64 arrays."""
    with _wrap():
        z = _U64(z) + _GOLDEN if np.isscalar(z) or np.ndim(z) == 0 else z + _GOLDEN
        z = (z ^ (z >> _U64(30))) * _MIX1
        z = (z ^ (z >> _U64(27))) * _MIX2
        return z ^ (z >> _U64(31))


def stream_state(seed: int, stream: int) -> np.uint64:
    """Initial state of stream `stream` under `seed`."""
    with _wrap():
        return mix64(mix64(_U64(seed % (1 << 64))) ^ _U64(stream % (1 << 64)))


def draw_unit(state: np.uint64, step) -> np.ndarray | float:
    """The step-th uniform [0,1) draw(s) of a stream; step may be an array."""
    with _wrap():
        word = mix64(state + _U64(step) * _GOLDEN if np.isscalar(step) else state + np.asarray(step, dtype=np.uint64) * _GOLDEN)
    out = (word >> _U64(11)).astype(np.float64) * _F53 if isinstance(word, np.ndarray) else float(word >> _U64(11)) * _F53
    return out


class SplitMix:
    """Sequential view over one stream, for scalar call sites."""

    def __init__(self, seed: int, stream: int = 0):
        self._state = stream_state(seed, stream)
        self._step = 0

    def next_float(self) -> float:
        v = draw_unit(self._state, self._step)
        self._step += 1
        return v

    def derive(self, salt: int) -> int:
        """Deterministic child seed, e.g. for per-piece refinement streams."""
        return int(mix64(self._state ^ _U64(salt % (1 << 64))))


def derive_seed(seed: int, *salts: int) -> int:
    """Fold salts into a seed; used to give worklist pieces stable streams."""
    state = _U64(seed % (1 << 64))
    with _wrap():
        for s in salts:
            state = mix64(state ^ _U64(s % (1 << 64)))
    return int(state)
