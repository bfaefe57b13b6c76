"""Seed derivation so independent components get decoupled RNG streams.

A master seed plus a stream tag goes through one splitmix64 round; adding a
new consumer therefore never shifts the streams of existing ones.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


def splitmix64(seed: int, stream: int = 0) -> int:
    z = (seed + 0x9E3779B97F4A7C15 * (stream + 1)) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return (z ^ (z >> 31)) & _MASK


def derive(seed: int, *tags: int) -> int:
    """Chain splitmix64 over several stream tags."""
    out = seed
    for t in tags:
        out = splitmix64(out, t)
    return out
