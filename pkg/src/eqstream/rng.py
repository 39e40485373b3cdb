"""Counter-based keyed random streams.

Every random draw in the simulators comes from a Philox generator whose key is
derived from ``(seed, *labels)``. Labels name the consumer (``"v2e.theta"``)
and the slot (frame index, block index), so the values a slot receives never
depend on how many other slots were drawn first or in what order.
"""

import zlib

import numpy as np


def _label_word(label):
    if isinstance(label, (int, np.integer)):
        return int(label) & 0xFFFFFFFFFFFFFFFF
    return zlib.crc32(str(label).encode("utf-8"))


def keyed_rng(seed, *labels) -> np.random.Generator:
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_label_word(lab) for lab in labels]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))
