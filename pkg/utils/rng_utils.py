"""
Seeded random streams.

Every stochastic step takes an explicit numpy Generator. Streams are derived from
(master seed, run index, stage tag, sub-index) so replications can run in any order
or on any worker and still reproduce bit for bit.
"""
import numpy as np

# Stage tags
STAGE_MEANS = 0
STAGE_SAMPLES = 1
STAGE_PARTITION = 2
STAGE_CROSS_CHECK = 3
STAGE_SELECTION = 4
STAGE_VARIANCE = 5

# Run index used for streams shared by every run (e.g. fixed proposal means)
SHARED_RUN = -1


def make_stream(seed: int, *key: int) -> np.random.Generator:
    """
    Return an independent Philox-backed generator for (seed, *key).
    Negative key entries are folded into the unsigned range so SHARED_RUN is usable.
    """
    spawn_key = tuple(int(k) % (1 << 32) for k in key)
    seq = np.random.SeedSequence(entropy=int(seed) % (1 << 64), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))


def run_stream(seed: int, run_index: int, stage: int, sub_index: int = 0) -> np.random.Generator:
    return make_stream(seed, run_index, stage, sub_index)
