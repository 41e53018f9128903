"""Named, independent random streams derived from one root seed."""

import numpy as np

STREAMS = {"params": 0, "samples": 1, "init": 2, "shuffle": 3, "split": 4}


def stream(seed: int, name: str) -> np.random.Generator:
    """Generator for stream ``name``; adding a consumer of one stream never shifts another."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(STREAMS[name],)))


def split_indices(n: int, fractions, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Random (train, val, test) index arrays; fractions may have two or three entries."""
    fractions = tuple(fractions)
    if len(fractions) == 2:
        fractions = (fractions[0], 0.0, fractions[1])
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"invalid split fractions {fractions}")
    perm = stream(seed, "split").permutation(n)
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return (
        np.sort(perm[:n_train]),
        np.sort(perm[n_train : n_train + n_val]),
        np.sort(perm[n_train + n_val :]),
    )
