"""Experiment configuration: flat key-value files, CLI overrides,
and a canonical fingerprint.

Config files hold one `key = value` per line with `#` comments. Every key
can also be passed to `drmrec train` as `--<key> <value>`; flags win over
the file, which wins over the defaults below.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError
from .interactions import FORMATS, SplitSpec
from .trainer import HyperParams


def _parse_bool_free_int(text: str) -> int:
    return int(text, 10)


def _parse_cutoffs(text: str):
    try:
        ks = tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"bad cutoff list {text!r}") from exc
    if not ks or any(k < 1 for k in ks):
        raise ConfigError(f"cutoffs must be positive integers, got {text!r}")
    return ks


# key -> (converter from string, default as string or None, help)
CONFIG_SCHEMA = {
    "data": (str, None, "single dataset file to split (mutually exclusive "
                        "with train/validation/test)"),
    "format": (str, "pair-list", "dataset format: pair-list or playlist-json"),
    "train": (str, None, "pre-split training pair-list"),
    "validation": (str, None, "pre-split validation pair-list"),
    "test": (str, None, "pre-split test pair-list"),
    "train_fraction": (float, "0.7", "train share of interactions"),
    "validation_fraction": (float, "0.1", "validation share"),
    "test_fraction": (float, "0.2", "test share"),
    "split_seed": (_parse_bool_free_int, "0", "seed for the random split"),
    "d": (_parse_bool_free_int, "64", "factor dimension"),
    "lr": (float, "0.05", "Adagrad base learning rate"),
    "tau": (float, "1.0", "relaxation temperature"),
    "lambda": (float, "1.0", "weight of the ranking loss"),
    "lambda_c": (float, "1.0", "weight of the covariance penalty (neg-l2)"),
    "rho": (_parse_bool_free_int, "3", "positives sampled per step"),
    "eta": (_parse_bool_free_int, None, "negatives per step (default 15*rho)"),
    "margin": (float, "1.0", "hinge margin"),
    "k": (_parse_bool_free_int, "10", "ranking-loss cutoff K"),
    "weight_kind": (str, "constant-one", "per-rank loss weight profile"),
    "epochs": (_parse_bool_free_int, "100", "maximum training epochs"),
    "patience": (_parse_bool_free_int, "10", "early-stopping patience"),
    "seed": (_parse_bool_free_int, "0", "base seed; run r uses seed + r"),
    "score_kind": (str, "dot", "score function: dot or neg-l2"),
    "min_train": (_parse_bool_free_int, "5", "eligibility threshold"),
    "val_k": (_parse_bool_free_int, "50", "validation recall cutoff"),
    "cov_refresh": (_parse_bool_free_int, "128", "steps between covariance "
                                                 "cache refreshes"),
    "runs": (_parse_bool_free_int, "5", "repeated runs per experiment"),
    "cutoffs": (_parse_cutoffs, "10,50", "evaluation cutoffs"),
    "out": (str, None, "output directory"),
}

# Keys that do not influence results, excluded from the fingerprint.
_NON_SEMANTIC_KEYS = ("out",)


@dataclass(frozen=True)
class ExperimentConfig:
    """Typed view over a resolved key-value configuration."""

    raw: dict

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def hyperparams(self) -> HyperParams:
        r = self.raw
        return HyperParams(
            dim=r["d"], lr=r["lr"], tau=r["tau"], lam=r["lambda"],
            lam_c=r["lambda_c"], rho=r["rho"], eta=r["eta"],
            margin=r["margin"], k=r["k"], weight_kind=r["weight_kind"],
            epochs=r["epochs"], seed=r["seed"], score_kind=r["score_kind"],
            min_train=r["min_train"], patience=r["patience"],
            val_k=r["val_k"], cov_refresh=r["cov_refresh"])

    @property
    def split_spec(self) -> SplitSpec:
        r = self.raw
        return SplitSpec(r["train_fraction"], r["validation_fraction"],
                         r["test_fraction"], r["split_seed"])

    def canonical_text(self) -> str:
        """Sorted key=value lines over the set semantic keys; basis of the
        fingerprint, so it is independent of key order in the source file.
        Unset keys are omitted, which makes the text itself a valid config
        file resolving back to this configuration."""
        lines = []
        for key in sorted(CONFIG_SCHEMA):
            if key in _NON_SEMANTIC_KEYS or self.raw.get(key) is None:
                continue
            value = self.raw[key]
            if key == "cutoffs":
                value = ",".join(str(k) for k in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_text().encode("utf-8")).hexdigest()


def read_config_file(path) -> dict:
    """Parse `key = value` lines into a string-to-string mapping."""
    values: dict = {}
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def resolve_config(file_values=None, overrides=None) -> ExperimentConfig:
    """Merge defaults, file values, and CLI overrides into a typed config.

    Raises ConfigError on unknown keys, unparseable values, or an invalid
    combination (e.g. both `data` and a pre-split path, missing files,
    fractions off by more than rounding).
    """
    merged = {}
    for key, (_, default, _help) in CONFIG_SCHEMA.items():
        merged[key] = default
    for source in (file_values or {}, overrides or {}):
        for key, value in source.items():
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"unknown config key {key!r}")
            if value is not None:
                merged[key] = value
    typed = {}
    for key, text in merged.items():
        if text is None:
            typed[key] = None
            continue
        conv = CONFIG_SCHEMA[key][0]
        try:
            typed[key] = conv(text) if isinstance(text, str) else text
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"bad value for {key!r}: {text!r}") from exc
    config = ExperimentConfig(typed)
    _validate(config)
    return config


def _validate(config: ExperimentConfig) -> None:
    r = config.raw
    pre_split = [r["train"], r["validation"], r["test"]]
    if r["data"] is not None and any(p is not None for p in pre_split):
        raise ConfigError("give either 'data' or train/validation/test, not both")
    if r["data"] is None:
        if any(p is None for p in pre_split):
            raise ConfigError("need 'data' or all of train/validation/test")
        for p in pre_split:
            if not Path(p).exists():
                raise ConfigError(f"split file does not exist: {p}")
    else:
        if not Path(r["data"]).exists():
            raise ConfigError(f"dataset does not exist: {r['data']}")
        config.split_spec  # fraction checks
    if r["format"] not in FORMATS:
        raise ConfigError(f"format must be one of {FORMATS}")
    if r["runs"] < 1:
        raise ConfigError("runs must be >= 1")
    config.hyperparams.validate()
