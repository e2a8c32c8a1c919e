"""Shared tolerances and seeding conventions.

Two tolerance regimes are kept apart on purpose: construction tolerances
(data errors) are much tighter than solver tolerances (iteration errors).
"""

from __future__ import annotations

import numpy as np

# Construction-time tolerances (data invariants).
WEIGHT_SUM_TOL = 1e-12
ATOM_MERGE_TOL = 1e-12

# Solver-output tolerances (marginals of computed couplings etc).
MARGINAL_TOL = 1e-9

# Engine defaults.
LP_TOL = 1e-9
FW_GAP_TOL = 1e-7
ASCENT_TOL = 1e-5

# Moment order p parametrizes the topology in the continuum theory only; on
# finite supports every moment is finite, so it is carried for documentation
# and never read by an algorithm.
DEFAULT_MOMENT_ORDER = 2

DEFAULT_SEED = 20240 + 817


def child_rngs(root_seed: int, n: int) -> list[np.random.Generator]:
    """Derive ``n`` independent generators from a root seed in a fixed order."""
    seq = np.random.SeedSequence(root_seed)
    return [np.random.default_rng(s) for s in seq.spawn(n)]


def rng_from(seed: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = DEFAULT_SEED
    return np.random.default_rng(np.random.SeedSequence(seed))
