"""Per-repetition random streams.

Each stream is a Philox-4x64 counter-based generator keyed by
``(master_seed, rep_index)`` through ``numpy.random.SeedSequence``. Gaussians
always come from ``Generator.standard_normal`` (numpy's ziggurat); nothing in
the package draws normals any other way. Streams never depend on how
repetitions are scheduled across workers.
"""

import numpy as np

from simkv.errors import ConfigurationError

_U64 = 2**64

# Reserved sub-stream tag so dataset generation never overlaps a repetition.
DATASET_STREAM = 2**32 - 1


class RngStream:
    def __init__(self, seed, rep=0):
        seed, rep = int(seed), int(rep)
        if not 0 <= seed < _U64:
            raise ConfigurationError(f"seed must be a 64-bit unsigned integer, got {seed}")
        if rep < 0:
            raise ConfigurationError(f"stream index must be nonnegative, got {rep}")
        self.seed = seed
        self.rep = rep
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, rep])))

    def normal(self, shape):
        return self._gen.standard_normal(shape)

    def uniform(self, shape):
        return self._gen.random(shape)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, rep={self.rep})"


def stream(master_seed, rep_index):
    return RngStream(master_seed, rep_index)


def streams(master_seed, rep_indices):
    return [RngStream(master_seed, r) for r in rep_indices]
