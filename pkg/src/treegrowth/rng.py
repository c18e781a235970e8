"""Seed derivation. Every stream is addressed by (run seed, path of integers)."""

from __future__ import annotations

import os

import numpy as np

SEED_ENV = "TREEGROWTH_SEED"
MASK64 = (1 << 64) - 1


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw, 0) & MASK64
    except ValueError:
        raise ValueError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def seed_sequence(seed: int, *path: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & MASK64, spawn_key=tuple(int(p) for p in path))


def generator(seed: int, *path: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *path)))


def derive_seed(seed: int, *path: int) -> int:
    """A 64-bit child seed for the stream at ``path``."""
    lo, hi = seed_sequence(seed, *path).generate_state(2, np.uint32)
    return (int(hi) << 32) | int(lo)
