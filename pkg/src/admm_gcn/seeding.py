"""One master seed fanned out to independent, named streams."""

import zlib

import numpy as np

STREAMS = ("init", "partition", "sbm", "split")


def subseed(seed: int, name: str) -> int:
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode())])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def substream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(subseed(seed, name))
