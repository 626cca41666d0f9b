"""One user seed fanned out to independent per-stage seeds.

``derive_seed(seed, stage)`` is the first 32-bit word of
``numpy.random.SeedSequence(seed, spawn_key=(STAGES.index(stage),))``, so the
derived seeds are stable across runs and platforms and do not overlap.
"""

import numpy as np

STAGES = ("split", "train", "generate", "classifier", "privacy")


def derive_seed(seed: int, stage: str) -> int:
    if stage not in STAGES:
        raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
    ss = np.random.SeedSequence(int(seed), spawn_key=(STAGES.index(stage),))
    return int(ss.generate_state(1)[0])
