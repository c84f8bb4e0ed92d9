"""Deterministic seed derivation.

Python's builtin hash() is salted per process, so reproducible seeds are
derived from sha256 over the string forms of the inputs instead.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_seed(*parts) -> int:
    """Collapse arbitrary values into a 64-bit seed, stable across runs."""
    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def stable_rng(*parts) -> np.random.Generator:
    """A numpy Generator seeded from stable_seed(*parts)."""
    return np.random.default_rng(stable_seed(*parts))
