"""Named, order-independent random substreams derived from one root seed.

Every consumer gets its own ``SeedSequence`` child keyed by a tuple, so adding
a new consumer never shifts the draws of an existing one.
"""

from __future__ import annotations

import numpy as np

# Top-level stream namespaces. Never renumber: doing so changes every result.
FLOWS = 1
CHANNEL = 2
RANDOM_ORDER = 3
INSTANCES = 4

# Channel link codes used as the second key element.
LINK_CODES = {
    "BS1": 0,
    "BS2": 1,
    "BS3": 2,
    "AIRSHIP": 3,
    "SATELLITE": 4,
    "SATELLITE_AIRSHIP": 5,
}


def substream(seed: int, *key: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, key...)``."""
    if seed < 0:
        raise ValueError("seed must be non-negative")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def flow_stream(seed: int, frame: int) -> np.random.Generator:
    return substream(seed, FLOWS, frame)


def channel_stream(seed: int, link: str, mr_index: int = 0) -> np.random.Generator:
    """Stream for one (transmitter, receiver) pair; draw one sample per frame in order."""
    return substream(seed, CHANNEL, LINK_CODES[link], mr_index)


def order_stream(seed: int, frame: int) -> np.random.Generator:
    return substream(seed, RANDOM_ORDER, frame)
