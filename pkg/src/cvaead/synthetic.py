"""Synthetic hierarchical dataset: products of latent factors plus noise.

Each observable feature x_j is driven by exactly one known latent k (via a
binary structure matrix whose columns partition the features into balanced
clusters) and a product of unknown latents u:

    x_j = (prod of u over the feature's subset) * k_{column(j)} + eps_j

with u, k standard normal and eps ~ N(0, epsilon_sigma^2). The structure
(cluster assignment and u subsets) is fixed per world; only the latent values
vary per sample.

Test variants corrupt the noise term after generation:

    type_a_anomaly        +5 epsilon_sigma on one random feature
    type_b_inlier_variant +3 epsilon_sigma on n/m random features (no
                          cluster alignment; a should-not-flag control)
    type_b_anomaly        +3 epsilon_sigma on every feature of one random
                          cluster

Generation is pure given (structure, seed); the hidden latents and noise are
retained in memory so x can be re-derived exactly, but never written to disk.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import (
    LABEL_INLIER,
    LABEL_TYPE_A,
    LABEL_TYPE_B,
    LABEL_TYPE_B_INLIER,
    Dataset,
)
from .errors import ConfigError, FileFormatError
from .fileio import atomic_write_text
from .seeding import DATA, INJECT, STRUCTURE, child_rng

DEFAULT_N = 100
DEFAULT_M = 5
DEFAULT_O = 5
DEFAULT_EPSILON_SIGMA = 0.1

STRUCTURE_FORMAT = "causal-structure"
STRUCTURE_VERSION = 1

# variant name -> (shift in units of epsilon_sigma, label)
VARIANTS = {
    LABEL_TYPE_A: (5.0, LABEL_TYPE_A),
    LABEL_TYPE_B_INLIER: (3.0, LABEL_TYPE_B_INLIER),
    LABEL_TYPE_B: (3.0, LABEL_TYPE_B),
}


@dataclass
class CausalStructure:
    """The fixed generative schema: dimensions, cluster map, u subsets."""

    n: int
    m: int
    o: int
    s_column: np.ndarray  # (n,) which k column feeds each feature
    u_assignment: list[tuple[int, ...]]  # per-feature u indices, each non-empty
    epsilon_sigma: float
    seed: int = 0

    def __post_init__(self):
        self.s_column = np.asarray(self.s_column, dtype=np.int64)
        if self.n <= 0 or self.m <= 0 or self.o <= 0:
            raise ConfigError(f"dimensions must be positive, got n={self.n} m={self.m} o={self.o}")
        if self.n % self.m != 0:
            raise ConfigError(f"m={self.m} must divide n={self.n}")
        if self.epsilon_sigma <= 0:
            raise ConfigError(f"epsilon_sigma must be > 0, got {self.epsilon_sigma}")
        if self.s_column.shape != (self.n,):
            raise ConfigError("s_column must assign every feature")
        counts = np.bincount(self.s_column, minlength=self.m)
        if counts.size != self.m or not np.all(counts == self.n // self.m):
            raise ConfigError("each k column must feed exactly n/m features")
        if len(self.u_assignment) != self.n:
            raise ConfigError("u_assignment must cover every feature")
        cleaned = []
        for j, subset in enumerate(self.u_assignment):
            subset = tuple(sorted(int(i) for i in subset))
            if not subset or subset[0] < 0 or subset[-1] >= self.o:
                raise ConfigError(f"feature {j}: u subset {subset} invalid for o={self.o}")
            cleaned.append(subset)
        self.u_assignment = cleaned

    @property
    def cluster_size(self) -> int:
        return self.n // self.m

    @property
    def s_matrix(self) -> np.ndarray:
        """The (n, m) binary matrix; one 1 per row."""
        s = np.zeros((self.n, self.m), dtype=np.int64)
        s[np.arange(self.n), self.s_column] = 1
        return s

    def cluster_features(self, column: int) -> np.ndarray:
        """Indices of the features driven by k column ``column``."""
        return np.flatnonzero(self.s_column == column)


def make_structure(
    n: int = DEFAULT_N,
    m: int = DEFAULT_M,
    o: int = DEFAULT_O,
    epsilon_sigma: float = DEFAULT_EPSILON_SIGMA,
    seed: int = 0,
) -> CausalStructure:
    """Build a structure with contiguous balanced clusters and random u subsets.

    Feature j is driven by k column j // (n/m). Each feature's u subset has
    size uniform in {1..o}, members drawn without replacement.
    """
    if n <= 0 or m <= 0 or o <= 0:
        raise ConfigError(f"dimensions must be positive, got n={n} m={m} o={o}")
    if n % m != 0:
        raise ConfigError(f"m={m} must divide n={n}")
    rng = child_rng(seed, STRUCTURE)
    s_column = np.arange(n) // (n // m)
    u_assignment = []
    for _ in range(n):
        size = int(rng.integers(1, o + 1))
        u_assignment.append(tuple(sorted(rng.choice(o, size=size, replace=False).tolist())))
    return CausalStructure(n, m, o, s_column, u_assignment, epsilon_sigma, seed)


def synthesize_x(structure: CausalStructure, u: np.ndarray, k: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """Apply the generative formula to explicit latents; the single source of
    truth for how x is computed, shared by generation and corruption."""
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    k = np.atleast_2d(np.asarray(k, dtype=np.float64))
    eps = np.atleast_2d(np.asarray(eps, dtype=np.float64))
    count = u.shape[0]
    f = np.empty((count, structure.n))
    for j, subset in enumerate(structure.u_assignment):
        f[:, j] = u[:, subset].prod(axis=1)
    return f * k[:, structure.s_column] + eps


def generate(structure: CausalStructure, count: int, seed: int = 0) -> Dataset:
    """Draw ``count`` inlier samples; retains u and eps for exact re-derivation."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = child_rng(seed, DATA)
    u = rng.standard_normal((count, structure.o))
    k = rng.standard_normal((count, structure.m))
    eps = rng.normal(0.0, structure.epsilon_sigma, size=(count, structure.n))
    x = synthesize_x(structure, u, k, eps)
    return Dataset(x=x, k=k, u=u, eps=eps, structure=structure)


def inject(dataset: Dataset, variant: str, seed: int = 0) -> Dataset:
    """Return a corrupted copy of an inlier dataset per the named variant.

    The shift is applied to the retained noise term and x is recomputed from
    the formula, so the regeneration identity keeps holding afterwards.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {sorted(VARIANTS)}")
    structure = dataset.structure
    if not isinstance(structure, CausalStructure):
        raise ConfigError("dataset carries no causal structure; corrupt freshly generated data")
    if dataset.u is None or dataset.eps is None:
        raise ConfigError("dataset lacks retained latents; corrupt freshly generated data")
    if any(lbl != LABEL_INLIER for lbl in dataset.labels):
        raise ConfigError("inject expects an all-inlier dataset")

    shift_sigmas, label = VARIANTS[variant]
    shift = shift_sigmas * structure.epsilon_sigma
    rng = child_rng(seed, INJECT)
    count = len(dataset)
    eps = dataset.eps.copy()
    corrupted: list[np.ndarray] = []
    for row in range(count):
        if variant == LABEL_TYPE_A:
            picked = np.array([rng.integers(structure.n)], dtype=np.int64)
        elif variant == LABEL_TYPE_B_INLIER:
            picked = np.sort(rng.choice(structure.n, size=structure.cluster_size, replace=False))
        else:
            picked = structure.cluster_features(int(rng.integers(structure.m)))
        eps[row, picked] += shift
        corrupted.append(picked.astype(np.int64))

    x = synthesize_x(structure, dataset.u, dataset.k, eps)
    return Dataset(
        x=x,
        k=dataset.k.copy(),
        labels=[label] * count,
        corrupted=corrupted,
        u=dataset.u.copy(),
        eps=eps,
        structure=structure,
    )


def save_structure(structure: CausalStructure, path) -> None:
    payload = {
        "format": STRUCTURE_FORMAT,
        "version": STRUCTURE_VERSION,
        "n": structure.n,
        "m": structure.m,
        "o": structure.o,
        "epsilon_sigma": structure.epsilon_sigma,
        "seed": structure.seed,
        "s_column": structure.s_column.tolist(),
        "u_assignment": [list(subset) for subset in structure.u_assignment],
    }
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_structure(path) -> CausalStructure:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != STRUCTURE_FORMAT:
        raise FileFormatError(f"{path}: not a structure file")
    if payload.get("version") != STRUCTURE_VERSION:
        raise FileFormatError(f"{path}: unsupported structure version {payload.get('version')}")
    try:
        return CausalStructure(
            n=payload["n"],
            m=payload["m"],
            o=payload["o"],
            s_column=np.array(payload["s_column"], dtype=np.int64),
            u_assignment=[tuple(s) for s in payload["u_assignment"]],
            epsilon_sigma=payload["epsilon_sigma"],
            seed=payload["seed"],
        )
    except KeyError as exc:
        raise FileFormatError(f"{path}: missing field {exc}") from None
