"""Deterministic substream derivation for Monte Carlo components.

Every stochastic routine in the package draws from a counter-based Philox
generator keyed by (master seed, purpose tag, indices...).  Substreams are
statistically independent and reproducible regardless of evaluation order,
which is what makes slab-parallel noise generation and common-random-number
comparisons safe.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["substream", "purpose_tag", "derive_seed"]


def purpose_tag(name: str) -> int:
    """Stable 32-bit tag for a named purpose ("noise", "paths", ...)."""
    return zlib.crc32(name.encode("utf-8")) & 0xFFFFFFFF


def substream(seed: int, purpose: str, *indices: int) -> np.random.Generator:
    """Return a Generator on an independent Philox substream.

    The stream is keyed by the master seed plus a purpose tag and integer
    indices (slab number, realization number, tube index, ...).  Identical
    keys give bit-identical streams; distinct keys give independent ones.
    """
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    key = (purpose_tag(purpose),) + tuple(int(i) & 0xFFFFFFFFFFFFFFFF for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, purpose: str, *indices: int) -> int:
    """Collapse a (seed, purpose, indices) key into a fresh 64-bit seed.

    Used where a component needs an integer master seed of its own (for
    example one noise stack per realization) rather than a Generator.
    """
    if not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    key = (purpose_tag(purpose),) + tuple(int(i) & 0xFFFFFFFFFFFFFFFF for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return int(ss.generate_state(1, np.uint64)[0])
