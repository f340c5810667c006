"""
Seeded random streams.

Every replicate, iteration or synthetic case draws from its own generator
derived from ``(seed, index)``, so results never depend on how work is split
across workers.
"""
import numpy as np

__all__ = ["stream", "derive_seed"]


def stream(seed: int, index: int) -> np.random.Generator:
    """Return the generator for item ``index`` of a run seeded with ``seed``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def derive_seed(seed: int, index: int) -> int:
    """Integer seed for item ``index``; used where a child record stores its own seed."""
    state = np.random.SeedSequence([int(seed), int(index)]).generate_state(1)
    return int(state[0])
