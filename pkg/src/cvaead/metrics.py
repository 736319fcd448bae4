"""Per-sample anomaly scores and the OR-combined verdict.

Two scores target two failure modes:

* type_a — reconstruction score for single-feature breakage. For each of L
  latent draws the decoder gives per-feature (mu, sigma); the per-feature
  term is (x - mu)^2 / sigma, averaged over draws, and the score is the max
  over features. The mean would dilute a one-feature deviation over all the
  healthy features; the max does not.
* type_b — latent score for small coherent shifts across a cluster. The
  posterior KL divergence from the standard-normal prior, divided by the
  latent dimension so values are comparable across latent sizes. Rank order
  equals the unnormalized KL, so ROC results are unaffected by the division.

A sample is flagged when either score exceeds its threshold (logical OR);
the two scores are never combined into one number.

Scoring runs in the model's standardized space. ``sigma_power`` selects
sigma (default) or sigma^2 normalization for type_a; ``average_before_max``
toggles mean-over-draws-then-max (default) vs max-per-draw-then-mean.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import model as M
from .errors import FileFormatError
from .fileio import atomic_write_text
from .seeding import SCORE, child_rng

DEFAULT_LATENT_DRAWS = 30

TRIGGER_NONE = "none"
TRIGGER_TYPE_A = "type_a"
TRIGGER_TYPE_B = "type_b"
TRIGGER_BOTH = "both"
TRIGGERS = (TRIGGER_NONE, TRIGGER_TYPE_A, TRIGGER_TYPE_B, TRIGGER_BOTH)

VERDICT_ANOMALOUS = "anomalous"
VERDICT_NORMAL = "normal"


@dataclass
class AnomalyScore:
    """Both scores for one sample, plus the per-feature terms behind type_a."""

    type_a: float
    type_b: float
    per_feature_a: np.ndarray | None = None
    sample_count: int = 0  # latent draws used for type_a


@dataclass
class Verdict:
    is_anomalous: bool
    triggered_by: str
    tau_a: float
    tau_b: float


def _score_noise(latent_draws, batch, latent_dim, noise, seed):
    if noise is not None:
        noise = np.asarray(noise, dtype=np.float64)
        if noise.ndim == 2:
            noise = noise[:, None, :]  # one draw block shared across the batch
        if noise.shape not in ((latent_draws, batch, latent_dim), (latent_draws, 1, latent_dim)):
            raise ValueError(
                f"noise shape {noise.shape} does not fit (L={latent_draws}, batch={batch}, d={latent_dim})"
            )
        return noise
    rng = child_rng(seed, SCORE)
    return rng.standard_normal((latent_draws, batch, latent_dim))


def score_type_a(
    model: M.CvaeModel,
    x: np.ndarray,
    k: np.ndarray,
    latent_draws: int = DEFAULT_LATENT_DRAWS,
    noise: np.ndarray | None = None,
    seed: int = 0,
    sigma_power: int = 1,
    average_before_max: bool = True,
):
    """Reconstruction score; returns (type_a, per_feature_a).

    Single-sample inputs give scalars/(n,)-vectors, batches give
    (count,)/(count, n) arrays. ``noise`` may inject the latent draws
    explicitly (shape (L, d) or (L, count, d)); otherwise they come from a
    seed-derived stream.
    """
    if latent_draws < 1:
        raise ValueError(f"latent_draws must be >= 1, got {latent_draws}")
    if sigma_power not in (1, 2):
        raise ValueError(f"sigma_power must be 1 or 2, got {sigma_power}")
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    kb = np.atleast_2d(np.asarray(k, dtype=np.float64))
    batch = xb.shape[0]

    posterior = M.encode(model, xb, kb)
    xs, _ = model.standardize(xb, kb)
    eps = _score_noise(latent_draws, batch, model.latent_dim, noise, seed)

    term_sum = np.zeros_like(xs)
    max_sum = np.zeros(batch)
    for draw in range(latent_draws):
        z = posterior.mu + posterior.sigma * eps[draw]
        decoded = M.decode(model, z, kb)
        term = (xs - decoded.mu) ** 2 / decoded.sigma**sigma_power
        term_sum += term
        max_sum += term.max(axis=1)
    per_feature = term_sum / latent_draws
    if average_before_max:
        type_a = per_feature.max(axis=1)
    else:
        type_a = max_sum / latent_draws
    if single:
        return float(type_a[0]), per_feature[0]
    return type_a, per_feature


def score_type_b(model: M.CvaeModel, x: np.ndarray, k: np.ndarray):
    """Latent score: posterior KL to the prior, per latent dimension.

    Deterministic — the posterior is a closed-form function of (x, k).
    """
    posterior = M.encode(model, x, k)
    kl = M.kl_to_standard_normal(posterior)
    value = kl / model.latent_dim
    return float(value) if np.ndim(value) == 0 else value


def score(
    model: M.CvaeModel,
    x: np.ndarray,
    k: np.ndarray,
    latent_draws: int = DEFAULT_LATENT_DRAWS,
    noise: np.ndarray | None = None,
    seed: int = 0,
    sigma_power: int = 1,
    average_before_max: bool = True,
) -> AnomalyScore:
    """Score one sample with both metrics."""
    type_a, per_feature = score_type_a(
        model, x, k, latent_draws, noise, seed, sigma_power, average_before_max
    )
    type_b = score_type_b(model, x, k)
    return AnomalyScore(
        type_a=type_a, type_b=type_b, per_feature_a=per_feature, sample_count=latent_draws
    )


def decide(anomaly_score: AnomalyScore, tau_a: float, tau_b: float) -> Verdict:
    """Apply the OR rule to one sample's scores."""
    if not (np.isfinite(tau_a) and np.isfinite(tau_b)):
        raise ValueError(f"thresholds must be finite, got tau_a={tau_a} tau_b={tau_b}")
    a = anomaly_score.type_a > tau_a
    b = anomaly_score.type_b > tau_b
    triggered = {
        (False, False): TRIGGER_NONE,
        (True, False): TRIGGER_TYPE_A,
        (False, True): TRIGGER_TYPE_B,
        (True, True): TRIGGER_BOTH,
    }[(bool(a), bool(b))]
    return Verdict(is_anomalous=bool(a or b), triggered_by=triggered, tau_a=tau_a, tau_b=tau_b)


def calibrate_thresholds(type_a_scores, type_b_scores, target_fpr: float):
    """Empirical (1 - target_fpr) quantiles of clean validation scores.

    Uses the "higher" quantile rule (next order statistic at or above the
    quantile point), so the realized false-positive rate on the calibration
    data never exceeds the target. A constant score distribution triggers a
    warning and yields the constant itself.
    """
    if not 0 < target_fpr < 1:
        raise ValueError(f"target_fpr must be in (0, 1), got {target_fpr}")
    taus = []
    for name, scores in (("type_a", type_a_scores), ("type_b", type_b_scores)):
        scores = np.asarray(scores, dtype=np.float64)
        if scores.size == 0:
            raise ValueError(f"{name}: empty calibration scores")
        if scores.max() == scores.min():
            warnings.warn(f"{name}: constant score distribution; threshold set to the observed value")
            taus.append(float(scores.max()))
        else:
            taus.append(float(np.quantile(scores, 1 - target_fpr, method="higher")))
    return taus[0], taus[1]


# --- score file -----------------------------------------------------------------

SCORE_HEADER = "sample_id,type_a,type_b,verdict,triggered_by"


def save_scores(path, type_a, type_b, verdicts: list[Verdict], sample_ids=None) -> None:
    """One row per sample: sample_id, type_a, type_b, verdict, triggered_by."""
    type_a = np.asarray(type_a, dtype=np.float64)
    type_b = np.asarray(type_b, dtype=np.float64)
    if not (type_a.size == type_b.size == len(verdicts)):
        raise ValueError("score/verdict lengths differ")
    if sample_ids is None:
        sample_ids = range(type_a.size)
    lines = [SCORE_HEADER]
    for sid, a, b, v in zip(sample_ids, type_a, type_b, verdicts):
        word = VERDICT_ANOMALOUS if v.is_anomalous else VERDICT_NORMAL
        lines.append(f"{sid},{float(a)!r},{float(b)!r},{word},{v.triggered_by}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_scores(path):
    """Parse a score file; returns (sample_ids, type_a, type_b, is_anomalous,
    triggered_by)."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != SCORE_HEADER:
        raise FileFormatError(f"{path}, line 1: expected header {SCORE_HEADER!r}")
    ids, type_a, type_b, flags, triggers = [], [], [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 5:
            raise FileFormatError(f"{path}, line {lineno}: {len(cells)} cells, expected 5")
        try:
            ids.append(int(cells[0]))
            type_a.append(float(cells[1]))
            type_b.append(float(cells[2]))
        except ValueError as exc:
            raise FileFormatError(f"{path}, line {lineno}: {exc}") from None
        if cells[3] not in (VERDICT_ANOMALOUS, VERDICT_NORMAL):
            raise FileFormatError(f"{path}, line {lineno}: unknown verdict {cells[3]!r}")
        if cells[4] not in TRIGGERS:
            raise FileFormatError(f"{path}, line {lineno}: unknown trigger {cells[4]!r}")
        flags.append(cells[3] == VERDICT_ANOMALOUS)
        triggers.append(cells[4])
    if not ids:
        raise FileFormatError(f"{path}: no scores")
    return (
        np.array(ids, dtype=np.int64),
        np.array(type_a),
        np.array(type_b),
        np.array(flags, dtype=bool),
        triggers,
    )
