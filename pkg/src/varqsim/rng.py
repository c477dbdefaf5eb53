"""Named, reproducible random streams.

Every stochastic component draws from its own stream derived from the run
seed and a string name, so adding draws to one component never shifts the
numbers that another one sees.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for stream `name` under the given run seed."""
    ss = np.random.SeedSequence([int(seed)] + list(name.encode()))
    return np.random.default_rng(ss)
