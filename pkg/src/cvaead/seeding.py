"""Deterministic seed derivation.

All randomness in the package flows from one master seed per run. Child
streams are derived as ``SeedSequence([master_seed, *path])`` where the path
is a tuple of small integers naming the consumer (documented below). Two runs
with the same master seed therefore produce bit-identical random streams
regardless of the order in which consumers ask for them.
"""

from __future__ import annotations

import numpy as np

# Stream name -> path component. Repeat/seed indices are appended after these.
STRUCTURE = 0  # causal structure / trigger graph wiring
DATA = 1  # sample generation
INIT = 2  # weight initialization
SHUFFLE = 3  # per-epoch batch shuffling
NOISE = 4  # latent noise during training
SCORE = 5  # latent noise during scoring
INJECT = 6  # anomaly injection choices
SPLIT = 7  # train/valid/test splitting
EXPERIMENT = 8  # experiment-level sub-seed derivation


def child_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Return an independent generator for the stream named by ``path``."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, path)]))


def derive_seed(master_seed: int, *path: int) -> int:
    """Collapse a path to a plain integer seed, for APIs that take one."""
    seq = np.random.SeedSequence([int(master_seed), *map(int, path)])
    return int(seq.generate_state(1)[0])
