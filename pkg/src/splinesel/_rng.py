"""Counter-based random streams for reproducible replicate draws.

Every Monte Carlo draw in the package is keyed by (seed, n, replicate) so any
single record can be regenerated in isolation and results do not depend on
worker count or execution order.
"""

import numpy as np


def replicate_rng(seed: int, n: int, replicate: int) -> np.random.Generator:
    """Generator for one replicate, independent of all others.

    Philox is counter-based: distinct (n, replicate) pairs occupy disjoint
    counter blocks under the same key, so streams never overlap.
    """
    bits = np.random.Philox(key=seed, counter=[0, 0, n, replicate])
    return np.random.Generator(bits)


def replicate_normals(seed: int, n: int, replicate: int, size: int) -> np.ndarray:
    """Standard-normal vector for one replicate."""
    return replicate_rng(seed, n, replicate).standard_normal(size)
