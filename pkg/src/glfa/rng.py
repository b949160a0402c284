"""Named random sub-streams derived from a single master seed."""

import numpy as np

_STREAMS = {
    "split": 1,
    "validation": 2,
    "init": 3,
    "shuffle": 4,
    "selection": 5,
    "synthetic": 6,
}


def stream(seed: int, name: str, *extra: int) -> np.random.Generator:
    """Return an independent generator for component `name`.

    Streams with different names (or different `extra` keys) never share
    state, so re-seeding one component leaves the others untouched.
    """
    if name not in _STREAMS:
        raise KeyError(f"unknown random stream {name!r}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_STREAMS[name], *extra))
    return np.random.default_rng(ss)
