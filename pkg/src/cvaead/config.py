"""Run configuration: one flat key=value text format shared by every command.

Format rules (the parser enforces all of them):

  * one ``key = value`` pair per line; ``#`` starts a comment; blank lines ok
  * keys must be known and appear at most once
  * booleans are ``true``/``false``; the unset marker is ``none``
  * ``hidden`` is a comma-separated list of layer widths, e.g. ``64,64``

Precedence, lowest to highest: built-in defaults, config file, environment,
command-line flags. Environment overrides exist only for path-valued keys and
are named CVAEAD_<KEY>, e.g. CVAEAD_DATASET_PATH. ``format_config`` emits a
canonical rendering that re-parses to an equal RunConfig, which is what every
command logs at startup.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields

from . import metrics as MET
from . import synthetic as SY
from . import trigger as TR
from .errors import ConfigError

ENV_PREFIX = "CVAEAD_"

VARIANT_NONE = "none"
# config-facing variant names -> dataset label constants
VARIANT_LABELS = {
    "type_a": SY.LABEL_TYPE_A,
    "type_b_inlier": SY.LABEL_TYPE_B_INLIER,
    "type_b": SY.LABEL_TYPE_B,
}
EXPERIMENTS = ("synthetic", "trigger")


@dataclass
class RunConfig:
    """Every pipeline knob with its default; one instance per invocation."""

    # synthetic generator
    n: int = SY.DEFAULT_N
    m: int = SY.DEFAULT_M
    o: int = SY.DEFAULT_O
    epsilon_sigma: float = SY.DEFAULT_EPSILON_SIGMA
    # trigger simulator
    l1_count: int = TR.DEFAULT_L1_COUNT
    hlt_per_l1: int = TR.DEFAULT_HLT_PER_L1
    noise_sigma: float = TR.DEFAULT_NOISE_SIGMA
    rate_scale: float = TR.DEFAULT_RATE_SCALE
    group_sigma: float = TR.DEFAULT_GROUP_SIGMA
    lumi_sigma: float = TR.DEFAULT_LUMI_SIGMA
    # data generation
    sample_count: int = 28572
    variant: str = VARIANT_NONE
    # model
    latent_dim: int = 8
    hidden: tuple = (64, 64)
    conditional: bool = True
    activation: str = "relu"
    # training
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 10
    grad_clip: float = 100.0
    variance_warmup: int = 100
    kl_warmup: int = 0
    # scoring
    latent_draws: int = MET.DEFAULT_LATENT_DRAWS
    sigma_power: int = 1
    average_before_max: bool = True
    tau_a: float | None = None
    tau_b: float | None = None
    target_fpr: float = 0.01
    # evaluation
    experiment: str = "synthetic"
    repeats: int = 5
    # randomness root for the whole invocation
    seed: int = 0
    # file paths (the only env-overridable keys)
    structure_path: str | None = None
    graph_path: str | None = None
    dataset_path: str | None = None
    checkpoint_path: str | None = None
    scores_path: str | None = None
    report_path: str | None = None
    out_dir: str | None = None


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None
    if value != value or value in (float("inf"), float("-inf")):
        raise ConfigError(f"expected a finite number, got {text!r}")
    return value


def _parse_bool(text: str) -> bool:
    if text == "true":
        return True
    if text == "false":
        return False
    raise ConfigError(f"expected true or false, got {text!r}")


def _parse_hidden(text: str) -> tuple:
    try:
        dims = tuple(int(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated widths, got {text!r}") from None
    if not dims or any(d < 1 for d in dims):
        raise ConfigError(f"layer widths must be >= 1, got {text!r}")
    return dims


def _parse_opt_float(text: str) -> float | None:
    return None if text == "none" else _parse_float(text)


def _parse_path(text: str) -> str | None:
    return None if text == "none" else text


def _fmt(value) -> str:
    if value is None:
        return "none"
    if value is True:
        return "true"
    if value is False:
        return "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _positive(name):
    return lambda v: None if v > 0 else f"{name} must be > 0, got {_fmt(v)}"


def _at_least(name, floor):
    return lambda v: None if v >= floor else f"{name} must be >= {floor}, got {_fmt(v)}"


def _choice(name, allowed):
    options = ", ".join(str(a) for a in allowed)
    return lambda v: None if v in allowed else f"{name} must be one of {options}; got {_fmt(v)}"


def _unit_interval(name):
    return lambda v: None if 0.0 < v < 1.0 else f"{name} must be strictly between 0 and 1, got {_fmt(v)}"


def _opt(check):
    return lambda v: None if v is None else check(v)


@dataclass(frozen=True)
class _Key:
    parse: object
    check: object = None  # value -> error message or None
    is_path: bool = False


_KEYS = {
    "n": _Key(_parse_int, _at_least("n", 1)),
    "m": _Key(_parse_int, _at_least("m", 1)),
    "o": _Key(_parse_int, _at_least("o", 1)),
    "epsilon_sigma": _Key(_parse_float, _positive("epsilon_sigma")),
    "l1_count": _Key(_parse_int, _at_least("l1_count", 1)),
    "hlt_per_l1": _Key(_parse_int, _at_least("hlt_per_l1", 1)),
    "noise_sigma": _Key(_parse_float, _positive("noise_sigma")),
    "rate_scale": _Key(_parse_float, _positive("rate_scale")),
    "group_sigma": _Key(_parse_float, _at_least("group_sigma", 0.0)),
    "lumi_sigma": _Key(_parse_float, _at_least("lumi_sigma", 0.0)),
    "sample_count": _Key(_parse_int, _at_least("sample_count", 1)),
    "variant": _Key(str, _choice("variant", (VARIANT_NONE, *VARIANT_LABELS))),
    "latent_dim": _Key(_parse_int, _at_least("latent_dim", 1)),
    "hidden": _Key(_parse_hidden),
    "conditional": _Key(_parse_bool),
    "activation": _Key(str, _choice("activation", ("relu", "tanh"))),
    "learning_rate": _Key(_parse_float, _positive("learning_rate")),
    "batch_size": _Key(_parse_int, _at_least("batch_size", 1)),
    "max_epochs": _Key(_parse_int, _at_least("max_epochs", 0)),
    "patience": _Key(_parse_int, _at_least("patience", 1)),
    "grad_clip": _Key(_parse_float, _at_least("grad_clip", 0.0)),
    "variance_warmup": _Key(_parse_int, _at_least("variance_warmup", 0)),
    "kl_warmup": _Key(_parse_int, _at_least("kl_warmup", 0)),
    "latent_draws": _Key(_parse_int, _at_least("latent_draws", 1)),
    "sigma_power": _Key(_parse_int, _choice("sigma_power", (1, 2))),
    "average_before_max": _Key(_parse_bool),
    "tau_a": _Key(_parse_opt_float),
    "tau_b": _Key(_parse_opt_float),
    "target_fpr": _Key(_parse_float, _unit_interval("target_fpr")),
    "experiment": _Key(str, _choice("experiment", EXPERIMENTS)),
    "repeats": _Key(_parse_int, _at_least("repeats", 1)),
    "seed": _Key(_parse_int, _at_least("seed", 0)),
    "structure_path": _Key(_parse_path, is_path=True),
    "graph_path": _Key(_parse_path, is_path=True),
    "dataset_path": _Key(_parse_path, is_path=True),
    "checkpoint_path": _Key(_parse_path, is_path=True),
    "scores_path": _Key(_parse_path, is_path=True),
    "report_path": _Key(_parse_path, is_path=True),
    "out_dir": _Key(_parse_path, is_path=True),
}

assert set(_KEYS) == {f.name for f in fields(RunConfig)}


def _parse_value(name: str, raw: str, source: str):
    spec = _KEYS.get(name)
    if spec is None:
        raise ConfigError(f"{source}: unknown config key {name!r}")
    try:
        value = spec.parse(raw.strip())
    except ConfigError as exc:
        raise ConfigError(f"{source}: {name}: {exc}") from None
    if spec.check is not None:
        problem = spec.check(value)
        if problem:
            raise ConfigError(f"{source}: {problem}")
    return value


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Parse key=value text into a {field: typed value} dict."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{source}, line {lineno}: expected key = value, got {line.strip()!r}")
        name, raw = (part.strip() for part in stripped.split("=", 1))
        if name in values:
            raise ConfigError(f"{source}, line {lineno}: repeated key {name!r}")
        values[name] = _parse_value(name, raw, f"{source}, line {lineno}")
    return values


def load_config(path) -> RunConfig:
    """Read one config file over the defaults (no env/flag layers)."""
    return resolve_config(config_path=path, env={})


def resolve_config(config_path=None, overrides: dict | None = None, env: dict | None = None) -> RunConfig:
    """Apply the precedence chain and return the effective RunConfig.

    ``overrides`` carries raw flag strings keyed by field name; ``env``
    defaults to os.environ and only CVAEAD_<PATH KEY> entries are honored.
    """
    values = {}
    if config_path is not None:
        try:
            text = open(config_path, encoding="utf-8").read()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {config_path}: {exc}") from None
        values.update(parse_config_text(text, source=str(config_path)))
    env = os.environ if env is None else env
    for name, spec in _KEYS.items():
        if spec.is_path and ENV_PREFIX + name.upper() in env:
            var = ENV_PREFIX + name.upper()
            values[name] = _parse_value(name, env[var], f"${var}")
    for name, raw in (overrides or {}).items():
        flag = "--" + name.replace("_", "-")
        values[name] = _parse_value(name, raw if isinstance(raw, str) else _fmt(raw), flag)
    return RunConfig(**values)


def format_config(config: RunConfig) -> str:
    """Canonical key=value rendering; parse_config_text inverts it."""
    lines = [f"{f.name} = {_fmt(getattr(config, f.name))}" for f in fields(RunConfig)]
    return "\n".join(lines) + "\n"
