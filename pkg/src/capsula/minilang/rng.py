"""64-bit linear congruential generator used by ``set.seed``/``runif``."""

from __future__ import annotations

from typing import NamedTuple

MULTIPLIER = 6364136223846793005
INCREMENT = 1442695040888963407
MASK = (1 << 64) - 1


class RngState(NamedTuple):
    s: int


def next_random(state: RngState) -> tuple[RngState, float]:
    """Advance the generator one step; the draw lies in [0, 1)."""
    s = (MULTIPLIER * state.s + INCREMENT) & MASK
    return RngState(s), (s >> 11) / 2.0**53


def seed_state(n: int) -> RngState:
    return RngState(n & MASK)
