"""Experiment configuration: an INI file with typed, validated keys.

Every key can be overridden from the command line as ``section.key=value``.
"""

from __future__ import annotations

import configparser
import hashlib
import io

from .errors import ConfigError


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(x) for x in s.replace(",", " ").split())


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.replace(",", " ").split())


def _str(s: str) -> str:
    return s.strip()


# section -> key -> (parser, default text)
SCHEMA = {
    "paths": {
        "corpus": (_str, ""),
        "workdir": (_str, ""),
    },
    "corpus": {
        "num_utts": (int, "2700"),
        "seed": (int, "0"),
        "kappa": (float, "0.05"),
        "r0": (float, "7.0"),
        "rate_median": (float, "7.0"),
        "rate_sigma": (float, "0.55"),
        "pair_gap_db": (float, "1.6"),
        "level_jitter_db": (float, "0.1"),
        "snr_db": (float, "30.0"),
        "min_phone_frames": (int, "3"),
        "words_per_utt": (_ints, "2 5"),
        "cv_fraction": (float, "0.05"),
        "test_fraction": (float, "0.2"),
    },
    "features": {
        "num_mel_filters": (int, "40"),
        "splice": (int, "5"),
        "lda_dim": (int, "200"),
        "ros_in_lda": (_bool, "true"),
    },
    "ros": {
        "max_pause_s": (float, "0.5"),
        "norm": (_str, "zscore"),
    },
    "gmm": {
        "num_iters": (int, "10"),
        "max_components": (int, "2"),
        "split_iters": (_ints, "4"),
        "trans_floor": (float, "1e-3"),
    },
    "nnet": {
        "hidden_layers": (int, "2"),
        "hidden_units": (int, "128"),
        "nonlinearity": (_str, "sigmoid"),
        "learning_rate": (float, "0.5"),
        "max_epochs": (int, "20"),
        "minibatch": (int, "256"),
        "halving_threshold": (float, "1e-3"),
        "max_stalls": (int, "2"),
        "dtype": (_str, "float32"),
    },
    "bins": {
        "slow_max": (float, "4.0"),
        "fast_min": (float, "10.0"),
    },
    "split": {
        "test_threshold": (float, "6.0"),
        "train_threshold": (float, "6.3"),
        "half_seed": (int, "0"),
    },
    "alpha": {
        "slow": (float, "1.01162"),
        "normal": (float, "1.0"),
        "fast": (float, "0.5"),
        "include_silence": (_bool, "false"),
    },
    "decode": {
        "acoustic_scale": (float, "0.3"),
        "beam": (float, "16.0"),
    },
    "experiment": {
        "seeds": (_ints, "1 2 3"),
        "sweep_grid": (_floats, "0.5 0.75 1.0 1.01162 1.25 1.5"),
    },
}

# Sections that locate files but do not change any computed number.
_NON_DIGEST = ("paths",)


class Config:
    """Parsed configuration; ``cfg["nnet.hidden_units"]`` or ``cfg.section("nnet")``."""

    def __init__(self, raw: dict):
        self._raw = {s: dict(keys) for s, keys in raw.items()}
        self._values = {}
        for section, keys in SCHEMA.items():
            for key, (parse, _) in keys.items():
                text = self._raw[section][key]
                try:
                    self._values[(section, key)] = parse(text)
                except ValueError as exc:
                    raise ConfigError(f"{section}.{key}: invalid value {text!r} ({exc})") from exc
        self._validate()

    def _validate(self):
        if not self["experiment.seeds"]:
            raise ConfigError("experiment.seeds: need at least one seed")
        if not 0 < self["bins.slow_max"] < self["bins.fast_min"]:
            raise ConfigError("bins.slow_max/bins.fast_min: need 0 < slow_max < fast_min")
        for k in ("slow", "normal", "fast"):
            if not self[f"alpha.{k}"] > 0:
                raise ConfigError(f"alpha.{k}: must be positive")
        if self["ros.norm"] not in ("zscore", "identity"):
            raise ConfigError("ros.norm: expected 'zscore' or 'identity'")
        if self["nnet.nonlinearity"] not in ("sigmoid", "relu"):
            raise ConfigError("nnet.nonlinearity: expected 'sigmoid' or 'relu'")
        if self["nnet.dtype"] not in ("float32", "float64"):
            raise ConfigError("nnet.dtype: expected 'float32' or 'float64'")
        if len(self["corpus.words_per_utt"]) != 2:
            raise ConfigError("corpus.words_per_utt: expected two integers 'min max'")

    def __getitem__(self, dotted: str):
        section, _, key = dotted.partition(".")
        try:
            return self._values[(section, key)]
        except KeyError:
            raise ConfigError(f"unknown config key {dotted!r}") from None

    def section(self, name: str) -> dict:
        return {k: self._values[(name, k)] for k in SCHEMA[name]}

    def to_ini(self, include_paths: bool = True) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        for section in SCHEMA:
            if section in _NON_DIGEST and not include_paths:
                continue
            cp[section] = {k: self._raw[section][k] for k in SCHEMA[section]}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def digest(self) -> str:
        """Hash of every setting that can change a result (file locations excluded)."""
        canon = []
        for section in SCHEMA:
            if section in _NON_DIGEST:
                continue
            for key in SCHEMA[section]:
                canon.append(f"{section}.{key}={self._values[(section, key)]!r}")
        return hashlib.sha256("\n".join(canon).encode()).hexdigest()[:16]

    def with_overrides(self, overrides) -> "Config":
        raw = {s: dict(k) for s, k in self._raw.items()}
        _apply_overrides(raw, overrides)
        return Config(raw)


def _defaults() -> dict:
    return {s: {k: d for k, (_, d) in keys.items()} for s, keys in SCHEMA.items()}


def _apply_overrides(raw: dict, overrides):
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r}: expected section.key=value")
        dotted, value = item.split("=", 1)
        section, _, key = dotted.strip().partition(".")
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"override {item!r}: unknown key {dotted.strip()!r}")
        raw[section][key] = value.strip()


def load_config(path=None, overrides=None, text: str | None = None) -> Config:
    """Defaults, then the file (or ``text``), then ``section.key=value`` overrides."""
    raw = _defaults()
    if path is not None or text is not None:
        cp = configparser.ConfigParser(interpolation=None)
        try:
            if text is not None:
                cp.read_string(text, source="<config>")
            else:
                with open(path, encoding="utf-8") as fh:
                    cp.read_file(fh, source=str(path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"config parse error: {exc}") from exc
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"{path or '<config>'}: unknown section [{section}]")
            for key, value in cp[section].items():
                if key not in SCHEMA[section]:
                    raise ConfigError(f"{path or '<config>'}: unknown key {section}.{key}")
                raw[section][key] = value
    _apply_overrides(raw, overrides)
    return Config(raw)
