"""Deterministic random-stream derivation for trajectories and sweeps.

Trajectory k of a run with master seed M draws from
``PCG64(SeedSequence(M, spawn_key=(k,)))``.  Sweep point p derives its own
run seed from ``SeedSequence(M, spawn_key=(SWEEP_DOMAIN, p))`` so that grid
points are statistically independent but fully reproducible.
"""

from __future__ import annotations

import numpy as np

# disambiguates sweep-point derivations from plain trajectory derivations
SWEEP_DOMAIN = 0x5EED


def trajectory_generator(master_seed: int, traj_index: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=(traj_index,))
    return np.random.Generator(np.random.PCG64(seq))


def sweep_point_seed(master_seed: int, point_index: int) -> int:
    seq = np.random.SeedSequence(master_seed,
                                 spawn_key=(SWEEP_DOMAIN, point_index))
    return int(seq.generate_state(2, dtype=np.uint64)[0])
