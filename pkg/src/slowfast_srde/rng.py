"""Keyed random streams.

Every stream is a Philox (counter-based) generator whose key is derived from
``(master_seed, entry, replica, role)`` through ``SeedSequence.spawn_key``,
so any trajectory can be regenerated without replaying the others.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ROLES = {"slow_noise": 0, "fast_noise": 1, "initial": 2, "aux": 3}

DEFAULT_CHUNK = 1 << 14


def stream(master_seed: int, entry: int, replica: int, role: str,
           coupling: str = "independent") -> np.random.Generator:
    """Generator for one (entry, replica, role) cell.

    Under identical coupling the fast role aliases the slow one, so both
    equations see the same Brownian increments.
    """
    if role not in ROLES:
        raise ValueError(f"unknown stream role {role!r}")
    if coupling == "identical" and role == "fast_noise":
        role = "slow_noise"
    seed = int(master_seed) & ((1 << 64) - 1)
    ss = np.random.SeedSequence(seed, spawn_key=(int(entry), int(replica), ROLES[role]))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class NoiseSource:
    """Standard normal rows for one role of one trajectory.

    Draws are consumed sequentially; numpy's generators produce the same
    sequence however the request is split, so chunking never changes a path.
    """

    gen: np.random.Generator
    width: int

    def take(self, n: int) -> np.ndarray:
        return self.gen.standard_normal((n, self.width))


class NoisePair:
    """Slow and fast noise for one trajectory (shared when coupled)."""

    def __init__(self, master_seed: int, entry: int, replica: int, width1: int, width2: int,
                 coupling: str = "independent"):
        self.shared = coupling == "identical"
        self.slow = NoiseSource(stream(master_seed, entry, replica, "slow_noise", coupling), width1)
        self.fast = self.slow if self.shared else NoiseSource(
            stream(master_seed, entry, replica, "fast_noise", coupling), width2)

    def take(self, n: int, need_slow: bool = True) -> tuple[np.ndarray, np.ndarray]:
        if self.shared:
            z = self.slow.take(n)
            return z, z
        # the slow stream is left untouched when the slow equation is frozen
        z1 = self.slow.take(n) if need_slow else np.zeros((n, self.slow.width))
        return z1, self.fast.take(n)
