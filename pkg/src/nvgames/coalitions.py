"""Bitmask helpers for coalitions of ``n`` players.

Player ``i`` (0-based) is bit ``i`` of the mask; coalition arrays are indexed
by ``mask - 1`` so that index ``2**n - 2`` is the grand coalition.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

MAX_PLAYERS = 12


def check_players(n: int, minimum: int = 1) -> None:
    if not minimum <= n <= MAX_PLAYERS:
        raise ValueError(f"player count must be in [{minimum}, {MAX_PLAYERS}], got {n}")


def grand(n: int) -> int:
    return (1 << n) - 1


def masks(n: int) -> range:
    """All non-empty coalition masks in ascending order."""
    return range(1, 1 << n)


def members(mask: int) -> list[int]:
    return [i for i in range(mask.bit_length()) if mask >> i & 1]


def size(mask: int) -> int:
    return bin(mask).count("1")


def mask_of(players) -> int:
    m = 0
    for i in players:
        m |= 1 << int(i)
    return m


@lru_cache(maxsize=None)
def membership(n: int) -> np.ndarray:
    """``(2**n - 1, n)`` 0/1 matrix; row ``mask - 1`` marks the members of ``mask``."""
    m = np.arange(1, 1 << n)[:, None]
    out = ((m >> np.arange(n)) & 1).astype(float)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def sizes(n: int) -> np.ndarray:
    out = membership(n).sum(axis=1).astype(int)
    out.setflags(write=False)
    return out
