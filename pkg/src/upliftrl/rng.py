"""Named random substreams.

All randomness in the package flows from one integer seed. Components draw
from independently seeded generators identified by a short name ("gen",
"batch", "action", "noise", ...), so adding draws in one component never
perturbs another.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the (seed, name) substream.

    Deterministic across processes and platforms: the name is folded into
    the seed sequence as its byte values.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, *name.encode("utf-8")]
    return np.random.default_rng(np.random.SeedSequence(entropy))
