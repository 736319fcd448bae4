"""Conditional VAE with learned per-feature output variance.

The encoder maps (x, k) to a diagonal Gaussian over the latent z; the decoder
maps (z, k) to a diagonal Gaussian over x whose variance is itself a network
output, so the model picks its own reconstruction resolution per feature.
Setting ``conditional=False`` drops k from both nets, giving the plain VAE
baseline on the same machinery.

Both heads emit log-variance (clamped to [-10, 10] before exponentiation for
stability early in training); sigma = exp(0.5 * log_var). The training loss
is reconstruction negative log-likelihood plus the closed-form KL divergence
to the standard-normal prior, estimated with a single reparameterized latent
sample per step.

Model inputs are standardized per feature with training-set statistics; the
statistics live on the model and travel with the checkpoint. All public
entry points accept raw (unstandardized) vectors.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import FileFormatError, NumericError, ShapeError, TrainingDivergedError
from .fileio import atomic_write_bytes
from .seeding import INIT, NOISE, SHUFFLE, child_rng

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

DEFAULT_HIDDEN = (64, 64)
DEFAULT_LATENT = 8
DEFAULT_ACTIVATION = "relu"

CHECKPOINT_MAGIC = b"CVAECKPT"
CHECKPOINT_VERSION = 1


@dataclass
class CvaeModel:
    encoder: nn.Mlp
    decoder: nn.Mlp
    latent_dim: int
    x_dim: int
    k_dim: int
    conditional: bool = True
    x_mean: np.ndarray = None  # type: ignore[assignment]
    x_scale: np.ndarray = None  # type: ignore[assignment]
    k_mean: np.ndarray = None  # type: ignore[assignment]
    k_scale: np.ndarray = None  # type: ignore[assignment]
    training_seed: int | None = None

    def __post_init__(self):
        if self.x_mean is None:
            self.x_mean = np.zeros(self.x_dim)
        if self.x_scale is None:
            self.x_scale = np.ones(self.x_dim)
        if self.k_mean is None:
            self.k_mean = np.zeros(self.k_dim)
        if self.k_scale is None:
            self.k_scale = np.ones(self.k_dim)
        enc_in = self.x_dim + self.k_dim if self.conditional else self.x_dim
        dec_in = self.latent_dim + self.k_dim if self.conditional else self.latent_dim
        if self.encoder.input_dim != enc_in:
            raise ShapeError(f"encoder input {self.encoder.input_dim}, expected {enc_in}")
        if self.encoder.output_dim != 2 * self.latent_dim:
            raise ShapeError(f"encoder output {self.encoder.output_dim}, expected {2 * self.latent_dim}")
        if self.decoder.input_dim != dec_in:
            raise ShapeError(f"decoder input {self.decoder.input_dim}, expected {dec_in}")
        if self.decoder.output_dim != 2 * self.x_dim:
            raise ShapeError(f"decoder output {self.decoder.output_dim}, expected {2 * self.x_dim}")

    def parameters(self) -> list[np.ndarray]:
        return self.encoder.parameters() + self.decoder.parameters()

    def standardize(self, x: np.ndarray, k: np.ndarray):
        xs = (np.asarray(x, dtype=np.float64) - self.x_mean) / self.x_scale
        ks = (np.asarray(k, dtype=np.float64) - self.k_mean) / self.k_scale
        return xs, ks

    def destandardize_x(self, xs: np.ndarray) -> np.ndarray:
        return np.asarray(xs) * self.x_scale + self.x_mean


def build_model(
    x_dim: int,
    k_dim: int,
    latent_dim: int = DEFAULT_LATENT,
    hidden=DEFAULT_HIDDEN,
    conditional: bool = True,
    activation: str = DEFAULT_ACTIVATION,
    rng: np.random.Generator | None = None,
    seed: int = 0,
) -> CvaeModel:
    """Construct a fresh model with Glorot-initialized encoder/decoder."""
    if rng is None:
        rng = child_rng(seed, INIT)
    enc_in = x_dim + k_dim if conditional else x_dim
    dec_in = latent_dim + k_dim if conditional else latent_dim
    encoder = nn.build_mlp([enc_in, *hidden, 2 * latent_dim], rng, hidden_activation=activation)
    decoder = nn.build_mlp([dec_in, *hidden, 2 * x_dim], rng, hidden_activation=activation)
    return CvaeModel(encoder, decoder, latent_dim, x_dim, k_dim, conditional)


@dataclass
class LatentPosterior:
    """Diagonal Gaussian q(z | x, k); sigma strictly positive."""

    mu: np.ndarray
    sigma: np.ndarray


@dataclass
class DecodedDistribution:
    """Per-feature Gaussian over x, in the model's standardized space."""

    mu: np.ndarray
    sigma: np.ndarray


def _clamped_heads(out: np.ndarray, dim: int):
    mu = out[..., :dim]
    log_var = np.clip(out[..., dim:], LOGVAR_MIN, LOGVAR_MAX)
    return mu, log_var


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")


def encode(model: CvaeModel, x: np.ndarray, k: np.ndarray) -> LatentPosterior:
    """Run the recognition net; returns N(mu, diag(sigma^2)) over z."""
    xs, ks = model.standardize(x, k)
    enc_in = np.concatenate([xs, ks], axis=-1) if model.conditional else xs
    out, _ = nn.mlp_forward(model.encoder, enc_in)
    _check_finite(out, "encoder output")
    mu, log_var = _clamped_heads(out, model.latent_dim)
    return LatentPosterior(mu=mu, sigma=np.exp(0.5 * log_var))


def decode(model: CvaeModel, z: np.ndarray, k: np.ndarray) -> DecodedDistribution:
    """Run the generative net on latent z (and raw k when conditional)."""
    ks = (np.asarray(k, dtype=np.float64) - model.k_mean) / model.k_scale
    dec_in = np.concatenate([np.asarray(z, dtype=np.float64), ks], axis=-1) if model.conditional else np.asarray(z, dtype=np.float64)
    out, _ = nn.mlp_forward(model.decoder, dec_in)
    _check_finite(out, "decoder output")
    mu, log_var = _clamped_heads(out, model.x_dim)
    return DecodedDistribution(mu=mu, sigma=np.exp(0.5 * log_var))


def reparameterize(posterior: LatentPosterior, noise: np.ndarray) -> np.ndarray:
    """z = mu + sigma * noise, with standard-normal noise from the caller."""
    return posterior.mu + posterior.sigma * np.asarray(noise)


def gaussian_nll(x: np.ndarray, decoded: DecodedDistribution, per_feature: bool = False):
    """Negative log-likelihood of x under the decoded per-feature Gaussians.

    sum_i (x_i - mu_i)^2 / (2 sigma_i^2) + log(sqrt(2 pi) sigma_i). With
    ``per_feature=True`` returns the unsummed terms.
    """
    x = np.asarray(x, dtype=np.float64)
    sigma = np.asarray(decoded.sigma, dtype=np.float64)
    if np.any(sigma <= 0.0):
        raise ValueError("gaussian_nll needs strictly positive sigma")
    terms = (x - decoded.mu) ** 2 / (2.0 * sigma**2) + np.log(sigma) + LOG_SQRT_2PI
    if per_feature:
        return terms
    return terms.sum(axis=-1)


def kl_to_standard_normal(posterior: LatentPosterior):
    """Closed-form KL(N(mu, diag sigma^2) || N(0, I)); >= 0, 0 iff identical."""
    sigma2 = np.asarray(posterior.sigma, dtype=np.float64) ** 2
    mu = np.asarray(posterior.mu, dtype=np.float64)
    return 0.5 * (mu**2 + sigma2 - 1.0 - np.log(sigma2)).sum(axis=-1)


@dataclass
class LossParts:
    total: np.ndarray
    nll: np.ndarray
    kl: np.ndarray


def cvae_loss(model: CvaeModel, x: np.ndarray, k: np.ndarray, noise: np.ndarray) -> LossParts:
    """Single-sample (or batched) training loss: reconstruction NLL + KL.

    ``noise`` is the standard-normal draw for the reparameterized latent,
    injected by the caller for determinism.
    """
    xs, ks = model.standardize(x, k)
    posterior = _encode_std(model, xs, ks)
    z = reparameterize(posterior, noise)
    decoded = _decode_std(model, z, ks)
    nll = gaussian_nll(xs, decoded)
    kl = kl_to_standard_normal(posterior)
    total = nll + kl
    if not np.all(np.isfinite(np.atleast_1d(total))):
        raise TrainingDivergedError("non-finite loss")
    return LossParts(total=total, nll=nll, kl=kl)


def _encode_std(model: CvaeModel, xs: np.ndarray, ks: np.ndarray) -> LatentPosterior:
    enc_in = np.concatenate([xs, ks], axis=-1) if model.conditional else xs
    out, _ = nn.mlp_forward(model.encoder, enc_in)
    mu, log_var = _clamped_heads(out, model.latent_dim)
    return LatentPosterior(mu=mu, sigma=np.exp(0.5 * log_var))


def _decode_std(model: CvaeModel, z: np.ndarray, ks: np.ndarray) -> DecodedDistribution:
    dec_in = np.concatenate([z, ks], axis=-1) if model.conditional else z
    out, _ = nn.mlp_forward(model.decoder, dec_in)
    mu, log_var = _clamped_heads(out, model.x_dim)
    return DecodedDistribution(mu=mu, sigma=np.exp(0.5 * log_var))


def _batch_loss_and_grads(model: CvaeModel, xs: np.ndarray, ks: np.ndarray, eps: np.ndarray,
                          unit_variance: bool = False, kl_weight: float = 1.0):
    """Mean loss over a standardized batch plus gradients for every parameter.

    Returns (total, nll, kl, grads); grads align with model.parameters().
    With ``unit_variance`` the decoder's variance head is held at sigma=1
    (warm-up mode): the likelihood reduces to squared error and the variance
    head receives no gradient. ``kl_weight`` scales the KL term in the
    optimized objective (annealing); the returned ``kl`` stays unweighted.
    """
    batch = xs.shape[0]
    scale = 1.0 / batch
    d = model.latent_dim

    enc_in = np.concatenate([xs, ks], axis=1) if model.conditional else xs
    enc_out, enc_cache = nn.mlp_forward(model.encoder, enc_in)
    mu_z = enc_out[:, :d]
    raw_lv_z = enc_out[:, d:]
    lv_z = np.clip(raw_lv_z, LOGVAR_MIN, LOGVAR_MAX)
    sigma_z = np.exp(0.5 * lv_z)
    z = mu_z + sigma_z * eps

    dec_in = np.concatenate([z, ks], axis=1) if model.conditional else z
    dec_out, dec_cache = nn.mlp_forward(model.decoder, dec_in)
    mu_x = dec_out[:, : model.x_dim]
    raw_lv_x = dec_out[:, model.x_dim :]
    if unit_variance:
        lv_x = np.zeros_like(raw_lv_x)
    else:
        lv_x = np.clip(raw_lv_x, LOGVAR_MIN, LOGVAR_MAX)
    var_x = np.exp(lv_x)

    resid = xs - mu_x
    nll = (resid**2 / (2.0 * var_x) + 0.5 * lv_x + LOG_SQRT_2PI).sum(axis=1)
    kl = 0.5 * (mu_z**2 + np.exp(lv_z) - 1.0 - lv_z).sum(axis=1)
    total = float((nll + kl_weight * kl).mean())

    # reconstruction head gradients (of the batch mean)
    d_mu_x = scale * (mu_x - xs) / var_x
    if unit_variance:
        d_lv_x = np.zeros_like(raw_lv_x)
    else:
        d_lv_x = scale * (0.5 - resid**2 / (2.0 * var_x))
        d_lv_x *= (raw_lv_x > LOGVAR_MIN) & (raw_lv_x < LOGVAR_MAX)
    dec_grads, dec_in_grad = nn.mlp_backward(
        model.decoder, dec_cache, np.concatenate([d_mu_x, d_lv_x], axis=1)
    )

    # through the reparameterized sample, plus the (possibly annealed) KL term
    dz = dec_in_grad[:, :d]
    d_mu_z = dz + kl_weight * scale * mu_z
    d_lv_z = dz * eps * 0.5 * sigma_z + kl_weight * scale * 0.5 * (np.exp(lv_z) - 1.0)
    d_lv_z *= (raw_lv_z > LOGVAR_MIN) & (raw_lv_z < LOGVAR_MAX)
    enc_grads, _ = nn.mlp_backward(
        model.encoder, enc_cache, np.concatenate([d_mu_z, d_lv_z], axis=1)
    )

    return total, float(nll.mean()), float(kl.mean()), enc_grads + dec_grads


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 10
    seed: int = 0
    standardize: bool = True
    # heavy-tailed features make occasional batches explode; 0 disables
    grad_clip: float = 100.0
    # epochs with the output variance pinned to 1 before the variance head
    # unfreezes. Without this the variance head learns the per-feature scale
    # first and damps the mean gradient (resid/sigma^2) exactly where the
    # signal is, leaving the decoder mean untrained. 0 disables.
    variance_warmup: int = 100
    # epochs over which the KL weight ramps linearly from 0 to 1. At full
    # weight from the start the prior pins the posterior before the decoder
    # can reward an informative one, and the encoder stalls. 0 disables.
    kl_warmup: int = 0


@dataclass
class TrainResult:
    model: CvaeModel
    train_loss: list[float] = field(default_factory=list)
    valid_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1
    epochs_run: int = 0


def _as_xk(dataset) -> tuple[np.ndarray, np.ndarray]:
    if hasattr(dataset, "x") and hasattr(dataset, "k"):
        return np.asarray(dataset.x, dtype=np.float64), np.asarray(dataset.k, dtype=np.float64)
    x, k = dataset
    return np.asarray(x, dtype=np.float64), np.asarray(k, dtype=np.float64)


def fit_standardizer(model: CvaeModel, x: np.ndarray, k: np.ndarray) -> None:
    """Store per-feature mean/std of the training set on the model.

    Features with (near) zero spread get scale 1 so standardization stays
    invertible.
    """
    model.x_mean = x.mean(axis=0)
    model.k_mean = k.mean(axis=0)
    x_std = x.std(axis=0)
    k_std = k.std(axis=0)
    model.x_scale = np.where(x_std > 1e-12, x_std, 1.0)
    model.k_scale = np.where(k_std > 1e-12, k_std, 1.0)


def train(model: CvaeModel, train_set, valid_set, config: TrainConfig | None = None) -> TrainResult:
    """Train with Adam and early stopping; returns the best-validation snapshot.

    Deterministic given ``config.seed``: batch order, latent noise, and the
    fixed validation noise all come from seed-derived streams. The per-epoch
    history records mean training loss and full validation loss.
    """
    config = config or TrainConfig()
    result = TrainResult(model=model)
    if config.max_epochs <= 0:
        return result

    train_x, train_k = _as_xk(train_set)
    valid_x, valid_k = _as_xk(valid_set)
    if train_x.shape[0] == 0 or valid_x.shape[0] == 0:
        raise ValueError("train and validation sets must be non-empty")
    if train_x.shape[1] != model.x_dim or train_k.shape[1] != model.k_dim:
        raise ShapeError(
            f"dataset dims ({train_x.shape[1]}, {train_k.shape[1]}) do not match "
            f"model ({model.x_dim}, {model.k_dim})"
        )

    if config.standardize:
        fit_standardizer(model, train_x, train_k)
    model.training_seed = config.seed
    xs, ks = model.standardize(train_x, train_k)
    vxs, vks = model.standardize(valid_x, valid_k)

    rng_shuffle = child_rng(config.seed, SHUFFLE)
    rng_noise = child_rng(config.seed, NOISE, 0)
    valid_eps = child_rng(config.seed, NOISE, 1).standard_normal(
        (vxs.shape[0], model.latent_dim)
    )

    params = model.parameters()
    adam = nn.adam_init(params, learning_rate=config.learning_rate)
    stopper = nn.EarlyStopping(patience=config.patience)

    n_train = xs.shape[0]
    for epoch in range(config.max_epochs):
        warm = epoch < config.variance_warmup
        beta = min(1.0, epoch / config.kl_warmup) if config.kl_warmup > 0 else 1.0
        order = rng_shuffle.permutation(n_train)
        total_sum = 0.0
        for start in range(0, n_train, config.batch_size):
            idx = order[start : start + config.batch_size]
            eps = rng_noise.standard_normal((idx.size, model.latent_dim))
            batch_total, _, _, grads = _batch_loss_and_grads(
                model, xs[idx], ks[idx], eps, unit_variance=warm, kl_weight=beta
            )
            if not math.isfinite(batch_total):
                raise TrainingDivergedError(f"training loss diverged at epoch {epoch}", epoch)
            nn.clip_global_norm(grads, config.grad_clip)
            nn.adam_step(params, grads, adam)
            total_sum += batch_total * idx.size
        result.train_loss.append(total_sum / n_train)

        v_total, _, _, _ = _batch_loss_and_grads(model, vxs, vks, valid_eps)
        if not math.isfinite(v_total):
            raise TrainingDivergedError(f"validation loss diverged at epoch {epoch}", epoch)
        result.valid_loss.append(v_total)
        result.epochs_run = epoch + 1
        # the stopper engages once the full objective is being optimized, so a
        # plateau inside the warm-up or KL ramp cannot end training early
        if not warm and beta >= 1.0 and stopper.update(v_total, params) == "stop":
            break

    stopper.restore(params)
    warmup_end = min(max(config.variance_warmup, config.kl_warmup), len(result.valid_loss))
    if warmup_end < len(result.valid_loss):
        result.best_epoch = warmup_end + int(np.argmin(result.valid_loss[warmup_end:]))
    elif result.valid_loss:
        result.best_epoch = int(np.argmin(result.valid_loss))
    return result


# --- checkpoint serialization -------------------------------------------------
#
# Layout (all integers little-endian):
#   bytes 0-7   magic "CVAECKPT"
#   bytes 8-11  uint32 format version
#   bytes 12-15 uint32 header length H
#   bytes 16-   UTF-8 JSON header (H bytes) with model metadata and an
#               ordered array manifest [{name, shape}, ...]
#   then        the manifest's arrays as raw float64 little-endian,
#               row-major, concatenated in manifest order
#
# Full field list in docs/FORMATS.md.


def _array_manifest(model: CvaeModel) -> list[tuple[str, np.ndarray]]:
    entries = []
    for net_name, net in (("encoder", model.encoder), ("decoder", model.decoder)):
        for i, layer in enumerate(net.layers):
            entries.append((f"{net_name}.{i}.weight", layer.weight))
            entries.append((f"{net_name}.{i}.bias", layer.bias))
    entries.append(("x_mean", model.x_mean))
    entries.append(("x_scale", model.x_scale))
    entries.append(("k_mean", model.k_mean))
    entries.append(("k_scale", model.k_scale))
    return entries


def save_model(model: CvaeModel, path) -> None:
    manifest = _array_manifest(model)
    header = {
        "format_version": CHECKPOINT_VERSION,
        "conditional": model.conditional,
        "x_dim": model.x_dim,
        "k_dim": model.k_dim,
        "latent_dim": model.latent_dim,
        "training_seed": model.training_seed,
        "encoder_activations": [layer.activation for layer in model.encoder.layers],
        "decoder_activations": [layer.activation for layer in model.decoder.layers],
        "arrays": [{"name": name, "shape": list(arr.shape)} for name, arr in manifest],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<II", CHECKPOINT_VERSION, len(header_bytes))
    blob += header_bytes
    for _, arr in manifest:
        blob += np.ascontiguousarray(arr, dtype="<f8").tobytes()
    atomic_write_bytes(path, bytes(blob))


def load_model(path) -> CvaeModel:
    raw = Path(path).read_bytes()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise FileFormatError(f"{path}: not a model checkpoint")
    version, header_len = struct.unpack("<II", raw[8:16])
    if version != CHECKPOINT_VERSION:
        raise FileFormatError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(raw[16 : 16 + header_len].decode("utf-8"))
    offset = 16 + header_len
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        end = offset + 8 * count
        if end > len(raw):
            raise FileFormatError(f"{path}: truncated payload at array {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise FileFormatError(f"{path}: {len(raw) - offset} trailing bytes")

    def rebuild(net_name: str, activations: list[str]) -> nn.Mlp:
        layers = []
        for i, act in enumerate(activations):
            layers.append(
                nn.Layer(arrays[f"{net_name}.{i}.weight"], arrays[f"{net_name}.{i}.bias"], act)
            )
        return nn.Mlp(layers)

    model = CvaeModel(
        encoder=rebuild("encoder", header["encoder_activations"]),
        decoder=rebuild("decoder", header["decoder_activations"]),
        latent_dim=header["latent_dim"],
        x_dim=header["x_dim"],
        k_dim=header["k_dim"],
        conditional=header["conditional"],
        x_mean=arrays["x_mean"],
        x_scale=arrays["x_scale"],
        k_mean=arrays["k_mean"],
        k_scale=arrays["k_scale"],
        training_seed=header["training_seed"],
    )
    return model


def models_equal(a: CvaeModel, b: CvaeModel) -> bool:
    """Bit-exact equality of architecture, weights, and standardization."""
    if (a.latent_dim, a.x_dim, a.k_dim, a.conditional, a.training_seed) != (
        b.latent_dim,
        b.x_dim,
        b.k_dim,
        b.conditional,
        b.training_seed,
    ):
        return False
    if len(a.encoder.layers) != len(b.encoder.layers) or len(a.decoder.layers) != len(b.decoder.layers):
        return False
    for la, lb in zip(a.encoder.layers + a.decoder.layers, b.encoder.layers + b.decoder.layers):
        if la.activation != lb.activation:
            return False
        if not (np.array_equal(la.weight, lb.weight) and np.array_equal(la.bias, lb.bias)):
            return False
    return all(
        np.array_equal(getattr(a, name), getattr(b, name))
        for name in ("x_mean", "x_scale", "k_mean", "k_scale")
    )
