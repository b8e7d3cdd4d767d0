"""Batches of independent seeded rollouts, optionally across worker processes."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

from patrolroute.env import rollout


def run_seeds(seed: int, n: int) -> list[int]:
    """Independent per-run seeds derived from one run seed."""
    return [int(s.generate_state(1, np.uint64)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _one(args):
    graph, config, policy, seed = args
    return rollout(graph, config, policy, seed)


def run_batch(graph, config, policy, seeds, jobs=1):
    """Results come back in ``seeds`` order regardless of ``jobs``."""
    if jobs <= 1 or len(seeds) <= 1:
        return [rollout(graph, config, policy, s) for s in seeds]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_one, [(graph, config, policy, s) for s in seeds], chunksize=max(1, len(seeds) // (4 * jobs))))
