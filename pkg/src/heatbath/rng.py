"""Per-path random streams.

Every path ``i`` of an ensemble owns a generator seeded from
``SeedSequence(seed, spawn_key=(i,))``, so results do not depend on how paths
are batched or in what order they are run.
"""
import zlib

import numpy as np


def path_rng(seed, index):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


class PathStreams:
    """Independent generators for paths ``start, ..., start+count-1``."""

    def __init__(self, seed, count, start=0):
        self.seed = int(seed)
        self.gens = [path_rng(self.seed, start + i) for i in range(count)]

    def __len__(self):
        return len(self.gens)

    def normals(self, steps, d):
        """Return an array of shape ``(steps, count, d)``.

        Each path draws its own ``steps * d`` numbers in time order, so
        drawing in several blocks gives the same numbers as one big block.
        """
        out = np.empty((len(self.gens), steps, d))
        for i, g in enumerate(self.gens):
            out[i] = g.standard_normal((steps, d))
        return out.transpose(1, 0, 2)


def named_rng(seed, tag):
    """Generator for an auxiliary task (sampling initial data, MCMC, ...).

    The two-element spawn key ``(2**32 - 1, crc32(tag))`` never collides with
    the one-element keys of :func:`path_rng`.
    """
    key = (0xFFFFFFFF, zlib.crc32(str(tag).encode()))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))
