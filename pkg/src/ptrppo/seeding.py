"""Named random substreams derived from one run seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for component ``name`` (e.g. ``"env.0"``, ``"policy"``, ``"replay"``).

    Streams for different names are statistically independent and each one
    depends only on ``(seed, name)``, so a component can be exercised alone
    and still see the same numbers it sees inside a full run.
    """
    key = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))
