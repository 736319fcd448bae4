"""Labeled sample collections and the delimited dataset file format.

A dataset holds observable vectors ``x``, known-condition vectors ``k``, a
per-sample label, and the set of corrupted feature indices. Generators may
also retain the hidden latents ``u`` and the noise draws ``eps`` so tests can
re-derive ``x`` exactly; those never leave the process through the file
format.

File format (CSV, one header row)::

    x_0,...,x_{n-1},k_0,...,k_{m-1},label,corrupted_features

``corrupted_features`` is a semicolon-joined list of feature indices, empty
for inliers. Floats are written with ``repr`` so values round-trip exactly.
Column prefixes are ``x``/``k`` for synthetic data and ``hlt``/``l1`` for
trigger rates.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FileFormatError, ShapeError
from .fileio import atomic_write_text
from .seeding import SPLIT, child_rng

LABEL_INLIER = "inlier"
LABEL_TYPE_A = "type_a_anomaly"
LABEL_TYPE_B_INLIER = "type_b_inlier_variant"
LABEL_TYPE_B = "type_b_anomaly"
LABELS = (LABEL_INLIER, LABEL_TYPE_A, LABEL_TYPE_B_INLIER, LABEL_TYPE_B)

# Labels whose samples count as positives; the Type B inlier variant is a
# deliberate should-not-flag case.
ANOMALOUS_LABELS = frozenset({LABEL_TYPE_A, LABEL_TYPE_B})


@dataclass
class Dataset:
    """A batch of samples: x (count, n), k (count, m), labels, corruption sets."""

    x: np.ndarray
    k: np.ndarray
    labels: list[str] = field(default_factory=list)
    corrupted: list[np.ndarray] = field(default_factory=list)
    u: np.ndarray | None = None
    eps: np.ndarray | None = None
    # provenance of generated data (causal structure or simulator config);
    # in-memory only, needed by the anomaly injectors
    structure: object | None = None
    x_prefix: str = "x"
    k_prefix: str = "k"

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.k = np.asarray(self.k, dtype=np.float64)
        if self.x.ndim != 2 or self.k.ndim != 2 or self.x.shape[0] != self.k.shape[0]:
            raise ShapeError(f"x {self.x.shape} and k {self.k.shape} must be (count, dim)")
        count = self.x.shape[0]
        if not self.labels:
            self.labels = [LABEL_INLIER] * count
        if not self.corrupted:
            self.corrupted = [np.empty(0, dtype=np.int64) for _ in range(count)]
        if len(self.labels) != count or len(self.corrupted) != count:
            raise ShapeError("labels/corrupted length does not match sample count")
        for label in self.labels:
            if label not in LABELS:
                raise ValueError(f"unknown label {label!r}")

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def m(self) -> int:
        return self.k.shape[1]

    def is_anomalous(self) -> np.ndarray:
        return np.array([lbl in ANOMALOUS_LABELS for lbl in self.labels])

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(
            x=self.x[indices],
            k=self.k[indices],
            labels=[self.labels[i] for i in indices],
            corrupted=[self.corrupted[i].copy() for i in indices],
            u=None if self.u is None else self.u[indices],
            eps=None if self.eps is None else self.eps[indices],
            structure=self.structure,
            x_prefix=self.x_prefix,
            k_prefix=self.k_prefix,
        )

    def save(self, path) -> None:
        """Write the dataset file format (drops u/eps by design)."""
        header = (
            [f"{self.x_prefix}_{j}" for j in range(self.n)]
            + [f"{self.k_prefix}_{i}" for i in range(self.m)]
            + ["label", "corrupted_features"]
        )
        lines = [",".join(header)]
        for row in range(len(self)):
            cells = [repr(float(v)) for v in self.x[row]]
            cells += [repr(float(v)) for v in self.k[row]]
            cells.append(self.labels[row])
            cells.append(";".join(str(j) for j in self.corrupted[row]))
            lines.append(",".join(cells))
        atomic_write_text(path, "\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    """Parse a dataset file; errors name the file and 1-based line."""
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    if not lines:
        raise FileFormatError(f"{path}: empty dataset file")
    header = lines[0].split(",")
    if header[-2:] != ["label", "corrupted_features"]:
        raise FileFormatError(f"{path}, line 1: expected trailing label,corrupted_features columns")
    feature_cols = header[:-2]
    prefixes = []
    for col in feature_cols:
        base, _, idx = col.rpartition("_")
        if not base or not idx.isdigit():
            raise FileFormatError(f"{path}, line 1: malformed column name {col!r}")
        prefixes.append(base)
    x_prefix = prefixes[0]
    n = prefixes.count(x_prefix)
    if prefixes[:n] != [x_prefix] * n or len(set(prefixes[n:])) != 1:
        raise FileFormatError(f"{path}, line 1: columns must be x block then k block")
    k_prefix = prefixes[n]
    m = len(prefixes) - n

    xs, ks, labels, corrupted = [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise FileFormatError(f"{path}, line {lineno}: {len(cells)} cells, expected {len(header)}")
        try:
            xs.append([float(c) for c in cells[:n]])
            ks.append([float(c) for c in cells[n : n + m]])
        except ValueError as exc:
            raise FileFormatError(f"{path}, line {lineno}: {exc}") from None
        label = cells[n + m]
        if label not in LABELS:
            raise FileFormatError(f"{path}, line {lineno}: unknown label {label!r}")
        labels.append(label)
        raw = cells[n + m + 1]
        try:
            idx = np.array([int(t) for t in raw.split(";") if t], dtype=np.int64)
        except ValueError as exc:
            raise FileFormatError(f"{path}, line {lineno}: {exc}") from None
        corrupted.append(idx)
    if not xs:
        raise FileFormatError(f"{path}: no samples")
    return Dataset(
        x=np.array(xs),
        k=np.array(ks),
        labels=labels,
        corrupted=corrupted,
        x_prefix=x_prefix,
        k_prefix=k_prefix,
    )


def split_dataset(dataset: Dataset, fractions=(0.70, 0.15, 0.15), seed: int = 0):
    """Split into contiguous blocks after one seeded shuffle.

    Returns (train, valid, test). Fractions must sum to <= 1; the last split
    absorbs rounding.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or sum(fractions) > 1 + 1e-9:
        raise ValueError(f"bad split fractions {fractions}")
    order = child_rng(seed, SPLIT).permutation(len(dataset))
    n_train = int(len(dataset) * fractions[0])
    n_valid = int(len(dataset) * fractions[1])
    train = dataset.subset(order[:n_train])
    valid = dataset.subset(order[n_train : n_train + n_valid])
    test = dataset.subset(order[n_train + n_valid :])
    return train, valid, test
