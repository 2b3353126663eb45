"""Counter-based random streams keyed by (master seed, replication, purpose).

Every random draw in the package comes from a stream built here, so a
replication's draws depend only on its key and never on scheduling order.
"""

from __future__ import annotations

import secrets
import zlib

import numpy as np

# purpose tags
DATA = 0
BOOT_GOF = 1
BOOT_SYMMETRY = 2
REDRAW_DATA = 3
REDRAW_BOOT = 4
PVALUE = 5
SAMPLE = 6


def stream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent Philox generator for ``(seed, *key)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def text_key(text: str) -> int:
    """Stable 32-bit key for a string (scenario ids, parameter strings)."""
    return zlib.crc32(text.encode("utf-8"))


def fresh_seed() -> int:
    """Pick a seed for callers that did not supply one. Always report it."""
    return secrets.randbelow(2**31)
