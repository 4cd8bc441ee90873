"""Counter-based random streams keyed by (seed, worker, step).

Each stream is a Philox generator whose key holds the seed and worker
index and whose counter starts at the step index, so streams never
depend on the order in which workers or steps are scheduled.
"""
import numpy as np

__all__ = ["stream", "check_seed"]

_U64 = 2**64


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < _U64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def stream(seed: int, worker: int = 0, step: int = 0) -> np.random.Generator:
    """Independent generator for one ``(seed, worker, step)`` triple."""
    key = [check_seed(seed), int(worker) % _U64]
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, 0, int(step) % _U64]))
