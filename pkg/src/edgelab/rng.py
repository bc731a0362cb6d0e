"""Counter-based random streams.

All randomness flows through :func:`stream`, which keys a Philox4x64
generator by ``(seed, task_id)`` via ``SeedSequence``.  Substreams for
different task ids are statistically independent, and a draw only depends
on its own key, so results do not depend on evaluation order or on how
work is split between workers.
"""

from __future__ import annotations

import numpy as np


def stream(seed: int, *task_id: int) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(t) for t in task_id))
    return np.random.Generator(np.random.Philox(ss))
