"""ROC/AUC machinery, the threshold sweep, and the two benchmark experiments.

AUC uses the rank statistic with half credit for ties, which equals the
trapezoidal area under the emitted ROC points exactly. The threshold sweep
binarizes an external per-sample classifier loss at every t in {0.01..0.99}
and reports the AUC of the anomaly scores against each binarization; grid
points where one class is empty carry a null marker instead of being
dropped, so curves stay plottable on the fixed grid.

The experiments follow one protocol: generate a world, split 70/15/15, build
the three corrupted copies of the test split, then for each of five repeats
train a conditional model and an unconditional baseline (fresh weight
initialization per repeat, identical data) and report per-seed and
mean/variance AUC for both detection problems:

    type_a problem: type_a score, corrupted-single-feature vs clean test set
    type_b problem: type_b score, cluster-coherent vs cluster-ignorant shift

Reports are JSON with a schema version; ROC points can be written as
fpr,tpr delimited files for external plotting. No plotting happens here.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import metrics as ME
from . import model as M
from . import synthetic as SY
from . import trigger as TR
from .data import LABEL_TYPE_A, LABEL_TYPE_B, LABEL_TYPE_B_INLIER, Dataset, split_dataset
from .errors import FileFormatError, UndefinedAucError
from .fileio import atomic_write_text
from .seeding import EXPERIMENT, derive_seed

REPORT_SCHEMA_VERSION = 1
SWEEP_GRID = np.round(np.arange(1, 100) * 0.01, 2)


@dataclass
class RocResult:
    points: np.ndarray  # (rows, 2) of (fpr, tpr), from (0,0) to (1,1)
    auc: float
    positive_count: int
    negative_count: int


def roc_auc(labels, scores) -> RocResult:
    """Rank-based AUC (ties get half credit) plus the full ROC polyline."""
    labels = np.asarray(labels).astype(bool)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.shape != scores.shape or labels.ndim != 1:
        raise ValueError(f"labels {labels.shape} and scores {scores.shape} must be equal-length 1-D")
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    total = labels.size
    positives = int(labels.sum())
    negatives = total - positives
    if positives == 0 or negatives == 0:
        raise UndefinedAucError(
            f"AUC undefined: {positives} positive / {negatives} negative samples"
        )

    # average ranks, ties sharing their group mean (1-based)
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(total)
    start = 0
    while start < total:
        stop = start
        while stop + 1 < total and sorted_scores[stop + 1] == sorted_scores[start]:
            stop += 1
        ranks[order[start : stop + 1]] = 0.5 * (start + stop) + 1.0
        start = stop + 1
    auc = (ranks[labels].sum() - positives * (positives + 1) / 2.0) / (positives * negatives)

    # ROC points at each distinct score threshold, descending
    desc = order[::-1]
    hits = labels[desc]
    desc_scores = scores[desc]
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    last_of_run = np.r_[np.flatnonzero(np.diff(desc_scores) != 0), total - 1]
    tpr = np.r_[0.0, tp[last_of_run] / positives]
    fpr = np.r_[0.0, fp[last_of_run] / negatives]
    points = np.column_stack([fpr, tpr])
    return RocResult(points=points, auc=float(auc), positive_count=positives, negative_count=negatives)


def trapezoid_area(points: np.ndarray) -> float:
    """Area under an ROC polyline; equals the rank AUC for roc_auc output."""
    points = np.asarray(points, dtype=np.float64)
    return float(np.trapezoid(points[:, 1], points[:, 0]))


def partial_auc(roc: RocResult, max_fpr: float = 0.1) -> float:
    """Unnormalized area under the ROC for fpr in [0, max_fpr]; a perfect
    detector yields max_fpr. Reported as data for the low-fall-out region."""
    if not 0 < max_fpr <= 1:
        raise ValueError(f"max_fpr must be in (0, 1], got {max_fpr}")
    fpr, tpr = roc.points[:, 0], roc.points[:, 1]
    clipped_f = [0.0]
    clipped_t = [0.0]
    for i in range(1, len(fpr)):
        if fpr[i] <= max_fpr:
            clipped_f.append(fpr[i])
            clipped_t.append(tpr[i])
        else:
            # interpolate the crossing of the max_fpr boundary
            span = fpr[i] - fpr[i - 1]
            frac = (max_fpr - fpr[i - 1]) / span if span > 0 else 0.0
            clipped_f.append(max_fpr)
            clipped_t.append(tpr[i - 1] + frac * (tpr[i] - tpr[i - 1]))
            break
    return float(np.trapezoid(clipped_t, clipped_f))


@dataclass
class SweepResult:
    thresholds: np.ndarray
    auc: list  # float per grid point, None where a class is empty


def threshold_sweep(classifier_losses, anomaly_scores) -> SweepResult:
    """Algorithmic sweep: binarize the external loss at each grid threshold
    and compute the AUC of the anomaly scores against that labeling."""
    losses = np.asarray(classifier_losses, dtype=np.float64)
    scores = np.asarray(anomaly_scores, dtype=np.float64)
    if losses.shape != scores.shape or losses.ndim != 1:
        raise ValueError(f"losses {losses.shape} and scores {scores.shape} must be equal-length 1-D")
    aucs = []
    for t in SWEEP_GRID:
        labels = losses > t
        if labels.all() or not labels.any():
            aucs.append(None)
            continue
        aucs.append(roc_auc(labels, scores).auc)
    if all(a is None for a in aucs):
        warnings.warn("threshold sweep degenerate: no grid point separates the losses")
    return SweepResult(thresholds=SWEEP_GRID.copy(), auc=aucs)


# --- experiment configs ------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Knobs shared by both experiments. ``sample_count`` is the total pool;
    the 70/15/15 split puts 20000 of the default pool into training."""

    master_seed: int = 0
    repeats: int = 5
    sample_count: int = 28572
    latent_dim: int = M.DEFAULT_LATENT
    hidden: tuple = M.DEFAULT_HIDDEN
    activation: str = M.DEFAULT_ACTIVATION
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 10
    grad_clip: float = 100.0
    variance_warmup: int = 100
    kl_warmup: int = 0
    latent_draws: int = ME.DEFAULT_LATENT_DRAWS


@dataclass
class SyntheticConfig(ExperimentConfig):
    n: int = SY.DEFAULT_N
    m: int = SY.DEFAULT_M
    o: int = SY.DEFAULT_O
    epsilon_sigma: float = SY.DEFAULT_EPSILON_SIGMA


@dataclass
class TriggerConfig(ExperimentConfig):
    l1_count: int = TR.DEFAULT_L1_COUNT
    hlt_per_l1: int = TR.DEFAULT_HLT_PER_L1
    noise_sigma: float = TR.DEFAULT_NOISE_SIGMA
    rate_scale: float = TR.DEFAULT_RATE_SCALE
    group_sigma: float = TR.DEFAULT_GROUP_SIGMA
    lumi_sigma: float = TR.DEFAULT_LUMI_SIGMA


@dataclass
class _TestBundle:
    inliers: Dataset
    type_a: Dataset
    type_b_inlier: Dataset
    type_b: Dataset


def _train_and_score(config: ExperimentConfig, train_set, valid_set, tests: _TestBundle,
                     conditional: bool, repeat: int):
    """One repeat for one model kind; returns per-problem AUC and ROC."""
    seed = derive_seed(config.master_seed, EXPERIMENT, 10 + repeat, int(conditional))
    mdl = M.build_model(
        x_dim=train_set.n,
        k_dim=train_set.m,
        latent_dim=config.latent_dim,
        hidden=config.hidden,
        conditional=conditional,
        activation=config.activation,
        seed=seed,
    )
    M.train(
        mdl,
        train_set,
        valid_set,
        M.TrainConfig(
            learning_rate=config.learning_rate,
            batch_size=config.batch_size,
            max_epochs=config.max_epochs,
            patience=config.patience,
            seed=seed,
            grad_clip=config.grad_clip,
            variance_warmup=config.variance_warmup,
            kl_warmup=config.kl_warmup,
        ),
    )

    score_seed = derive_seed(config.master_seed, EXPERIMENT, 20 + repeat, int(conditional))
    a_clean, _ = ME.score_type_a(mdl, tests.inliers.x, tests.inliers.k,
                                 config.latent_draws, seed=score_seed)
    a_bad, _ = ME.score_type_a(mdl, tests.type_a.x, tests.type_a.k,
                               config.latent_draws, seed=score_seed)
    roc_a = roc_auc(
        np.r_[np.zeros(len(a_clean), bool), np.ones(len(a_bad), bool)],
        np.r_[a_clean, a_bad],
    )

    b_control = ME.score_type_b(mdl, tests.type_b_inlier.x, tests.type_b_inlier.k)
    b_bad = ME.score_type_b(mdl, tests.type_b.x, tests.type_b.k)
    roc_b = roc_auc(
        np.r_[np.zeros(len(b_control), bool), np.ones(len(b_bad), bool)],
        np.r_[b_control, b_bad],
    )
    return {"type_a": roc_a, "type_b": roc_b}


def _summarize(per_seed: list[float]) -> dict:
    arr = np.asarray(per_seed, dtype=np.float64)
    return {
        "per_seed_auc": [float(v) for v in arr],
        "mean_auc": float(arr.mean()),
        "variance": float(arr.var()),
    }


def _run_experiment(kind: str, config: ExperimentConfig, tests_builder, out_dir=None) -> dict:
    train_set, valid_set, tests, world_info = tests_builder(config)
    model_names = {True: "cvae", False: "vae"}
    rocs = {name: {"type_a": [], "type_b": []} for name in model_names.values()}
    for repeat in range(config.repeats):
        for conditional, name in model_names.items():
            outcome = _train_and_score(config, train_set, valid_set, tests, conditional, repeat)
            for problem in ("type_a", "type_b"):
                rocs[name][problem].append(outcome[problem])

    results = {}
    for name in model_names.values():
        results[name] = {}
        for problem in ("type_a", "type_b"):
            runs = rocs[name][problem]
            summary = _summarize([r.auc for r in runs])
            summary["partial_auc_fpr_0_1"] = [float(partial_auc(r)) for r in runs]
            results[name][problem] = summary

    config_dict = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(config).items()}
    report = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "experiment": kind,
        "config": config_dict,
        "world": world_info,
        "split_sizes": {
            "train": len(train_set),
            "valid": len(valid_set),
            "test": len(tests.inliers),
        },
        "results": results,
    }
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in model_names.values():
            for problem in ("type_a", "type_b"):
                for repeat, roc in enumerate(rocs[name][problem]):
                    save_roc(out_dir / f"roc_{name}_{problem}_seed{repeat}.csv", roc)
        save_report(report, out_dir / "report.json")
    return report


def _synthetic_world(config: SyntheticConfig):
    structure = SY.make_structure(
        config.n, config.m, config.o, config.epsilon_sigma,
        seed=derive_seed(config.master_seed, EXPERIMENT, 0),
    )
    pool = SY.generate(structure, config.sample_count, seed=derive_seed(config.master_seed, EXPERIMENT, 1))
    train_set, valid_set, test_inliers = split_dataset(pool, seed=derive_seed(config.master_seed, EXPERIMENT, 2))
    tests = _TestBundle(
        inliers=test_inliers,
        type_a=SY.inject(test_inliers, LABEL_TYPE_A, seed=derive_seed(config.master_seed, EXPERIMENT, 3)),
        type_b_inlier=SY.inject(test_inliers, LABEL_TYPE_B_INLIER, seed=derive_seed(config.master_seed, EXPERIMENT, 4)),
        type_b=SY.inject(test_inliers, LABEL_TYPE_B, seed=derive_seed(config.master_seed, EXPERIMENT, 5)),
    )
    world_info = {"kind": "synthetic", "n": config.n, "m": config.m, "o": config.o,
                  "epsilon_sigma": config.epsilon_sigma}
    return train_set, valid_set, tests, world_info


def _trigger_world(config: TriggerConfig):
    graph = TR.make_graph(
        l1_count=config.l1_count,
        hlt_per_l1=config.hlt_per_l1,
        noise_sigma=config.noise_sigma,
        rate_scale=config.rate_scale,
        group_sigma=config.group_sigma,
        lumi_sigma=config.lumi_sigma,
        seed=derive_seed(config.master_seed, EXPERIMENT, 0),
    )
    pool = TR.simulate(graph, config.sample_count, seed=derive_seed(config.master_seed, EXPERIMENT, 1))
    train_set, valid_set, test_inliers = split_dataset(pool, seed=derive_seed(config.master_seed, EXPERIMENT, 2))
    tests = _TestBundle(
        inliers=test_inliers,
        type_a=TR.inject_rate_anomaly(test_inliers, LABEL_TYPE_A, seed=derive_seed(config.master_seed, EXPERIMENT, 3)),
        type_b_inlier=TR.inject_rate_anomaly(test_inliers, LABEL_TYPE_B_INLIER, seed=derive_seed(config.master_seed, EXPERIMENT, 4)),
        type_b=TR.inject_rate_anomaly(test_inliers, LABEL_TYPE_B, seed=derive_seed(config.master_seed, EXPERIMENT, 5)),
    )
    world_info = {"kind": "trigger", "l1_count": config.l1_count, "hlt_per_l1": config.hlt_per_l1,
                  "noise_sigma": config.noise_sigma, "group_sigma": config.group_sigma}
    return train_set, valid_set, tests, world_info


def run_synthetic_experiment(config: SyntheticConfig | None = None, out_dir=None) -> dict:
    """Five-repeat CVAE-vs-VAE benchmark on the synthetic world."""
    return _run_experiment("synthetic", config or SyntheticConfig(), _synthetic_world, out_dir)


def run_trigger_experiment(config: TriggerConfig | None = None, out_dir=None) -> dict:
    """Five-repeat CVAE-vs-VAE benchmark on simulated trigger rates."""
    return _run_experiment("trigger", config or TriggerConfig(), _trigger_world, out_dir)


# --- file formats ------------------------------------------------------------------

ROC_HEADER = "fpr,tpr"
LOSS_HEADER = "sample_id,log_loss"


def save_roc(path, roc: RocResult) -> None:
    lines = [ROC_HEADER]
    for f, t in roc.points:
        lines.append(f"{float(f)!r},{float(t)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_roc(path) -> np.ndarray:
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != ROC_HEADER:
        raise FileFormatError(f"{path}, line 1: expected header {ROC_HEADER!r}")
    points = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 2:
            raise FileFormatError(f"{path}, line {lineno}: expected fpr,tpr")
        try:
            points.append((float(cells[0]), float(cells[1])))
        except ValueError as exc:
            raise FileFormatError(f"{path}, line {lineno}: {exc}") from None
    if not points:
        raise FileFormatError(f"{path}: no points")
    return np.array(points)


def save_classifier_losses(path, losses, sample_ids=None) -> None:
    losses = np.asarray(losses, dtype=np.float64)
    if sample_ids is None:
        sample_ids = range(losses.size)
    lines = [LOSS_HEADER]
    for sid, loss in zip(sample_ids, losses):
        lines.append(f"{sid},{float(loss)!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_classifier_losses(path):
    """Returns (sample_ids, losses) from a sample_id,log_loss file."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines or lines[0] != LOSS_HEADER:
        raise FileFormatError(f"{path}, line 1: expected header {LOSS_HEADER!r}")
    ids, losses = [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != 2:
            raise FileFormatError(f"{path}, line {lineno}: expected sample_id,log_loss")
        try:
            ids.append(int(cells[0]))
            losses.append(float(cells[1]))
        except ValueError as exc:
            raise FileFormatError(f"{path}, line {lineno}: {exc}") from None
    if not ids:
        raise FileFormatError(f"{path}: no losses")
    return np.array(ids, dtype=np.int64), np.array(losses)


def save_report(report: dict, path) -> None:
    """Reports serialize with sorted keys so equal runs are byte-identical."""
    atomic_write_text(path, json.dumps(report, indent=2, sort_keys=True) + "\n")


def load_report(path) -> dict:
    path = Path(path)
    try:
        report = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(report, dict) or "schema_version" not in report:
        raise FileFormatError(f"{path}: not an experiment report")
    if report["schema_version"] != REPORT_SCHEMA_VERSION:
        raise FileFormatError(f"{path}: unsupported schema version {report['schema_version']}")
    return report
