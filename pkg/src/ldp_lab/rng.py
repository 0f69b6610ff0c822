"""
Counter-based noise for reproducible parallel Monte Carlo

Every (seed, stream, path index) triple owns a disjoint Philox counter
block, so a path's noise never depends on which worker simulates it or on
how many paths are simulated alongside it. Stream STREAM_B drives the main
Brownian motion, STREAM_W the independent perturbation of the coupled
process and STREAM_MARTINGALE the test martingales.
"""

import numpy as np

STREAM_B = 0
STREAM_W = 1
STREAM_MARTINGALE = 2

MASK64 = (1 << 64) - 1


def path_generator(seed: int, path_index: int, stream: int = STREAM_B) -> np.random.Generator:
    """Generator whose Philox key is the seed and whose counter starts at (stream, path_index, 0, 0)"""
    key = int(seed) & MASK64
    counter = ((int(stream) & MASK64) << 192) | ((int(path_index) & MASK64) << 128)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def brownian_increments(seed: int, path_index: int, stream: int, n_steps: int, dim: int, dt: float) -> np.ndarray:
    """N(0, dt I) increments for one path, shape (n_steps, dim)"""
    return np.sqrt(dt) * path_generator(seed, path_index, stream).standard_normal((n_steps, dim))


def chunk_increments(seed: int, first_index: int, count: int, stream: int, n_steps: int, dim: int,
                     dt: float) -> np.ndarray:
    """Increments for paths first_index .. first_index+count-1, shape (count, n_steps, dim)"""
    out = np.empty((count, n_steps, dim))
    for i in range(count):
        out[i] = brownian_increments(seed, first_index + i, stream, n_steps, dim, dt)
    return out
