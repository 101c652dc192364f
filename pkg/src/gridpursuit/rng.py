"""Named, splittable random streams.

Every source of randomness in a run is a separate generator derived from
(run seed, domain, optional index), so adding agents or reordering draws in
one subsystem never perturbs another.
"""
from __future__ import annotations

import numpy as np

# Domain tags for substreams.  Values are arbitrary but frozen: changing them
# changes every seeded result.
PLACEMENT = 1
SOFM = 2
KMEANS = 3
PURSUER = 4
EVADER = 5


def substream(seed: int, domain: int, index: int = 0) -> np.random.Generator:
    """Return an independent generator for (seed, domain, index)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, domain, index))))
