"""Reproducible noise streams for trajectory ensembles.

Each trajectory owns a counter-based Philox stream keyed by a
splitmix-style hash of (ensemble seed, trajectory index). Streams are
therefore independent of how trajectories are batched or scheduled,
which is what makes ensemble output a pure function of (seed, n_traj).
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One output of the splitmix64 generator at the given state."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def trajectory_key(seed: int, index: int) -> int:
    """Derive the Philox key for one trajectory of an ensemble."""
    return splitmix64((seed & _MASK64) ^ splitmix64(index & _MASK64))


def run_seed(seed: int, run_index: int) -> int:
    """Derive an independent ensemble seed for repeated sample runs."""
    return splitmix64(splitmix64(seed & _MASK64) ^ ((run_index + 1) & _MASK64))


def wiener_generators(seed: int, indices: range) -> list[np.random.Generator]:
    """One Philox-backed generator per trajectory index."""
    return [
        np.random.Generator(np.random.Philox(key=trajectory_key(seed, k)))
        for k in indices
    ]
