from __future__ import annotations

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one named consumer of the run seed.

    Streams are keyed by name, so adding a consumer never shifts the draws of
    the others.
    """
    key = tuple(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
