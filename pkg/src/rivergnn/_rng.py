"""Named, splittable random streams.

Every stream is a Philox (counter-based) generator keyed by the root seed and
a path of names, e.g. ``substream(7, "init", "GCNII")``. Names are mapped to
integers with CRC-32 so the key derivation is reproducible anywhere.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, *names: str | int) -> np.random.Generator:
    key = tuple(zlib.crc32(str(n).encode("utf-8")) for n in names)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=key)))
