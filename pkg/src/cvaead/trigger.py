"""Simulated two-level trigger rates: L1 paths seeding HLT paths.

The known conditions k are the L1 path rates, the observables x are the HLT
path rates. Per sample:

    l1_p  = rate_scale * g * baseline_p          g ~ LogNormal(0, lumi_sigma^2)
    hlt_h = acceptance_h * l1_parent(h) * e_parent(h) * max(1 + eta, 0)

with eta ~ N(0, noise_sigma^2) per path and e_p = exp(group_sigma * w_p),
w_p ~ N(0, 1) per sample, a hidden per-group efficiency wobble shared by all
HLT paths seeded by the same L1 path. The wobble is what gives the latent
space something real to capture beyond the observed conditions: with
group_sigma = 0 the HLT rates are a deterministic function of k up to
independent per-path noise, and a conditional model has nothing left to
encode. Group membership is contiguous: parent(h) = h // hlt_per_l1.

Anomalies are multiplicative, reflecting that rates scale with luminosity:

    type_a_anomaly        one HLT path scaled by (1 + 5 noise_sigma)
    type_b_inlier_variant hlt_per_l1 paths chosen anywhere, (1 + 3 noise_sigma)
    type_b_anomaly        every path of one L1 group, (1 + 3 noise_sigma)
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

DEFAULT_L1_COUNT = 4
DEFAULT_HLT_PER_L1 = 6
DEFAULT_NOISE_SIGMA = 0.05
DEFAULT_RATE_SCALE = 1000.0
DEFAULT_GROUP_SIGMA = 0.05
DEFAULT_LUMI_SIGMA = 0.2

GRAPH_FORMAT = "trigger-graph"
GRAPH_VERSION = 1

# variant name -> multiplier in units of noise_sigma
RATE_VARIANTS = {
    LABEL_TYPE_A: 5.0,
    LABEL_TYPE_B_INLIER: 3.0,
    LABEL_TYPE_B: 3.0,
}


@dataclass
class TriggerGraph:
    """Fixed simulator wiring: seeding map, per-path constants, noise scales."""

    l1_count: int
    hlt_per_l1: int
    acceptance: np.ndarray  # (hlt_count,) in (0, 1)
    baseline: np.ndarray  # (l1_count,) per-path rate multiplier
    noise_sigma: float = DEFAULT_NOISE_SIGMA
    rate_scale: float = DEFAULT_RATE_SCALE
    group_sigma: float = DEFAULT_GROUP_SIGMA
    lumi_sigma: float = DEFAULT_LUMI_SIGMA
    seed: int = 0

    def __post_init__(self):
        self.acceptance = np.asarray(self.acceptance, dtype=np.float64)
        self.baseline = np.asarray(self.baseline, dtype=np.float64)
        if self.l1_count < 1 or self.hlt_per_l1 < 1:
            raise ConfigError(
                f"need at least one path of each kind, got l1_count={self.l1_count} "
                f"hlt_per_l1={self.hlt_per_l1}"
            )
        if self.acceptance.shape != (self.hlt_count,):
            raise ConfigError(f"acceptance must cover all {self.hlt_count} HLT paths")
        if np.any(self.acceptance <= 0) or np.any(self.acceptance >= 1):
            raise ConfigError("acceptance values must lie strictly inside (0, 1)")
        if self.baseline.shape != (self.l1_count,) or np.any(self.baseline <= 0):
            raise ConfigError("baseline must be positive, one per L1 path")
        if self.noise_sigma <= 0 or self.rate_scale <= 0:
            raise ConfigError("noise_sigma and rate_scale must be > 0")
        if self.group_sigma < 0 or self.lumi_sigma < 0:
            raise ConfigError("group_sigma and lumi_sigma must be >= 0")

    @property
    def hlt_count(self) -> int:
        return self.l1_count * self.hlt_per_l1

    @property
    def parent(self) -> np.ndarray:
        """L1 parent index of each HLT path."""
        return np.arange(self.hlt_count) // self.hlt_per_l1

    def group_paths(self, l1_index: int) -> np.ndarray:
        """HLT indices seeded by the given L1 path."""
        start = l1_index * self.hlt_per_l1
        return np.arange(start, start + self.hlt_per_l1)


def make_graph(
    l1_count: int = DEFAULT_L1_COUNT,
    hlt_per_l1: int = DEFAULT_HLT_PER_L1,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    rate_scale: float = DEFAULT_RATE_SCALE,
    group_sigma: float = DEFAULT_GROUP_SIGMA,
    lumi_sigma: float = DEFAULT_LUMI_SIGMA,
    seed: int = 0,
) -> TriggerGraph:
    """Draw per-path acceptances (uniform [0.05, 0.5]) and L1 baselines
    (uniform [0.5, 2]); the seeding layout itself is fixed."""
    rng = child_rng(seed, STRUCTURE)
    acceptance = rng.uniform(0.05, 0.5, size=l1_count * hlt_per_l1)
    baseline = rng.uniform(0.5, 2.0, size=l1_count)
    return TriggerGraph(
        l1_count=l1_count,
        hlt_per_l1=hlt_per_l1,
        acceptance=acceptance,
        baseline=baseline,
        noise_sigma=noise_sigma,
        rate_scale=rate_scale,
        group_sigma=group_sigma,
        lumi_sigma=lumi_sigma,
        seed=seed,
    )


def simulate(graph: TriggerGraph, count: int, seed: int = 0) -> Dataset:
    """Draw ``count`` inlier rate samples; hidden group factors are retained
    on the dataset (u slot) for tests but never written to disk."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = child_rng(seed, DATA)
    g = rng.lognormal(0.0, graph.lumi_sigma, size=count)
    w = rng.standard_normal((count, graph.l1_count))
    eta = rng.normal(0.0, graph.noise_sigma, size=(count, graph.hlt_count))

    l1 = graph.rate_scale * g[:, None] * graph.baseline[None, :]
    efficiency = np.exp(graph.group_sigma * w)
    parent = graph.parent
    hlt = graph.acceptance[None, :] * l1[:, parent] * efficiency[:, parent] * np.maximum(1.0 + eta, 0.0)
    return Dataset(x=hlt, k=l1, u=w, eps=eta, structure=graph, x_prefix="hlt", k_prefix="l1")


def inject_rate_anomaly(dataset: Dataset, variant: str, seed: int = 0) -> Dataset:
    """Return a corrupted copy: chosen HLT rates scaled multiplicatively."""
    if variant not in RATE_VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; expected one of {sorted(RATE_VARIANTS)}")
    graph = dataset.structure
    if not isinstance(graph, TriggerGraph):
        raise ConfigError("dataset carries no trigger graph; corrupt freshly simulated data")
    if any(lbl != LABEL_INLIER for lbl in dataset.labels):
        raise ConfigError("inject_rate_anomaly expects an all-inlier dataset")

    factor = 1.0 + RATE_VARIANTS[variant] * graph.noise_sigma
    rng = child_rng(seed, INJECT)
    count = len(dataset)
    x = dataset.x.copy()
    corrupted: list[np.ndarray] = []
    for row in range(count):
        if variant == LABEL_TYPE_A:
            picked = np.array([rng.integers(graph.hlt_count)], dtype=np.int64)
        elif variant == LABEL_TYPE_B_INLIER:
            picked = np.sort(rng.choice(graph.hlt_count, size=graph.hlt_per_l1, replace=False))
        else:
            picked = graph.group_paths(int(rng.integers(graph.l1_count)))
        x[row, picked] *= factor
        corrupted.append(picked.astype(np.int64))
    return Dataset(
        x=x,
        k=dataset.k.copy(),
        labels=[variant] * count,
        corrupted=corrupted,
        u=None if dataset.u is None else dataset.u.copy(),
        eps=None if dataset.eps is None else dataset.eps.copy(),
        structure=graph,
        x_prefix=dataset.x_prefix,
        k_prefix=dataset.k_prefix,
    )


def save_graph(graph: TriggerGraph, path) -> None:
    payload = {
        "format": GRAPH_FORMAT,
        "version": GRAPH_VERSION,
        "l1_count": graph.l1_count,
        "hlt_per_l1": graph.hlt_per_l1,
        "acceptance": graph.acceptance.tolist(),
        "baseline": graph.baseline.tolist(),
        "noise_sigma": graph.noise_sigma,
        "rate_scale": graph.rate_scale,
        "group_sigma": graph.group_sigma,
        "lumi_sigma": graph.lumi_sigma,
        "seed": graph.seed,
    }
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_graph(path) -> TriggerGraph:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(payload, dict) or payload.get("format") != GRAPH_FORMAT:
        raise FileFormatError(f"{path}: not a trigger graph file")
    if payload.get("version") != GRAPH_VERSION:
        raise FileFormatError(f"{path}: unsupported graph version {payload.get('version')}")
    try:
        return TriggerGraph(
            l1_count=payload["l1_count"],
            hlt_per_l1=payload["hlt_per_l1"],
            acceptance=np.array(payload["acceptance"], dtype=np.float64),
            baseline=np.array(payload["baseline"], dtype=np.float64),
            noise_sigma=payload["noise_sigma"],
            rate_scale=payload["rate_scale"],
            group_sigma=payload["group_sigma"],
            lumi_sigma=payload["lumi_sigma"],
            seed=payload["seed"],
        )
    except KeyError as exc:
        raise FileFormatError(f"{path}: missing field {exc}") from None
