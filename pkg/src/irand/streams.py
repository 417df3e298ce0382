"""Deterministic, order-independent random-number streams.

All randomness in a run flows from a single master seed. Every randomized
task (drawing a subsample plan, shuffle ``s`` inside subsample ``m``, a
Monte-Carlo replicate, ...) owns a counter-based generator keyed by the
master seed and the task's integer path. Streams for distinct paths are
statistically independent and do not depend on the order in which they are
consumed, so results are reproducible under any degree of parallelism.
"""

from __future__ import annotations

import numpy as np

from .errors import UsageError

# Stream domains, one per kind of randomized task.
PLAN = 0  # subsample-plan assignment draws
PERMUTATION = 1  # treatment shuffles, path (PERMUTATION, m, s)
RELABEL = 2  # image relabelling in the reorganized-data permutation test
REPLICATE = 3  # per-replicate panel generation in Monte-Carlo experiments
ESTIMATE = 4  # per-estimator seeds inside a Monte-Carlo replicate
SYNTH = 5  # summary-driven panel synthesis
DGP = 6  # structural-equation panel generation


def substream(seed: int, *path: int) -> np.random.Generator:
    """Return the generator for stream node ``(seed, *path)``.

    The same (seed, path) always yields the same Philox stream.
    """
    if seed < 0:
        raise UsageError(f"seed must be non-negative, got {seed}")
    if any(p < 0 for p in path):
        raise UsageError(f"stream path entries must be non-negative, got {path}")
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(path))
    return np.random.Generator(np.random.Philox(sequence))


def child_seed(seed: int, *path: int) -> int:
    """Derive an integer seed for a nested component from ``(seed, *path)``."""
    if seed < 0:
        raise UsageError(f"seed must be non-negative, got {seed}")
    sequence = np.random.SeedSequence(seed, spawn_key=tuple(path))
    return int(sequence.generate_state(1, np.uint32)[0])
