"""Deterministic RNG derivation.

Every random decision in the package flows from one top-level integer seed
through named derivation, so independent components (batch sampling, mask
placement, per-tile corruption) never share or race a global RNG.
"""
from __future__ import annotations

import hashlib

import numpy as np


def stable_hash64(name: str) -> int:
    """64-bit hash of a string that is stable across processes and platforms.

    Python's builtin hash() is salted per process; this one is not.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for component `name` under top-level `seed`."""
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, stable_hash64(name)]))


def derive_seed(seed: int, name: str) -> int:
    """Plain integer sub-seed, for APIs that take a seed rather than an RNG."""
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, stable_hash64(name)])
    return int(ss.generate_state(1, np.uint64)[0])
