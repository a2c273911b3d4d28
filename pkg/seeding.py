"""Named random substreams derived from one root seed."""

import zlib
from typing import Dict

import numpy as np


def stream_key(name: str) -> int:
    """Stable integer key for a stream name (independent of PYTHONHASHSEED)."""
    return zlib.crc32(name.encode("utf-8"))


class RandomStreams:
    """
    Hands out one numpy Generator per name, all derived from a root seed.

    Toggling one component of an experiment (say, the advantage estimator)
    only changes draws made from that component's stream.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: Dict[str, np.random.Generator] = {}

    def sequence(self, name: str, *indices: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(stream_key(name),) + tuple(int(i) for i in indices))

    def get(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = np.random.default_rng(self.sequence(name))
        return self._streams[name]

    def child(self, name: str, index: int) -> np.random.Generator:
        """Fresh generator for the index-th unit of work (e.g. an episode) of a stream."""
        return np.random.default_rng(self.sequence(name, index))

    def __getitem__(self, name: str) -> np.random.Generator:
        return self.get(name)
