"""Flat dotted-key configuration with typed, validated defaults.

File format: one ``key = value`` per line, ``#`` comments, unknown keys are
hard errors. Defaults are the experiment settings every stage shares.
"""

from __future__ import annotations


class ConfigError(ValueError):
    pass


def _bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# key -> (parser, default)
REGISTRY = {
    "seed": (int, 7),
    "dtype": (str, "float32"),
    "data.k_core": (int, 10),
    "data.k_core_strict": (_bool, False),
    "data.split": (str, "8:1:1"),
    "data.max_len": (int, 50),
    "data.downsample_t": (float, 1e-5),
    "data.downsample_drop": (_bool, True),
    "embed.d_sem": (int, 64),
    "embed.min_freq": (int, 1),
    "rec.d": (int, 64),
    "rec.layers": (int, 2),
    "rec.heads": (int, 4),
    "rec.dropout": (float, 0.2),
    "rec.epochs": (int, 20),
    "rec.lr": (float, 5e-4),
    "rec.weight_decay": (float, 1e-5),
    "moe.experts": (int, 8),
    "moe.dropout": (float, 0.2),
    "lm.d": (int, 128),
    "lm.layers": (int, 4),
    "lm.heads": (int, 4),
    "lm.ctx": (int, 256),
    "seg.epochs": (int, 5),
    "seg.lr": (float, 1e-4),
    "seg.batch": (int, 8),
    "seg.weight_decay": (float, 1e-6),
    "seg.max_tokens": (int, 32),
    "eer.epochs": (int, 50),
    "eer.lr": (float, 5e-4),
    "eer.batch": (int, 256),
    "eer.weight_decay": (float, 1e-5),
    "eer.hyper_hidden": (int, 64),
    "eer.hyper_scale": (float, 0.1),
    "eval.exclude_history": (_bool, True),
}

_POSITIVE = (
    "data.k_core", "data.max_len", "data.downsample_t", "embed.d_sem",
    "rec.d", "rec.layers", "rec.heads", "rec.epochs", "rec.lr",
    "moe.experts", "lm.d", "lm.layers", "lm.heads", "lm.ctx",
    "seg.epochs", "seg.lr", "seg.batch", "eer.epochs", "eer.lr",
    "eer.batch", "eer.hyper_hidden",
)


class Config:
    def __init__(self, values=None):
        self._values = {k: default for k, (_, default) in REGISTRY.items()}
        for key, value in (values or {}).items():
            self.set(key, value)
        self.validate()

    def set(self, key, value):
        if key not in REGISTRY:
            raise ConfigError(f"unknown config key {key!r}")
        parser, _ = REGISTRY[key]
        if isinstance(value, str):
            try:
                value = parser(value)
            except ValueError as exc:
                raise ConfigError(f"config key {key!r}: {exc}") from None
        self._values[key] = value

    def __getitem__(self, key):
        try:
            return self._values[key]
        except KeyError:
            raise ConfigError(f"unknown config key {key!r}") from None

    def as_dict(self):
        return dict(self._values)

    def validate(self):
        for key in _POSITIVE:
            if not self._values[key] > 0:
                raise ConfigError(f"config key {key!r} must be positive, got {self._values[key]}")
        for key in ("rec.weight_decay", "seg.weight_decay", "eer.weight_decay"):
            if self._values[key] < 0:
                raise ConfigError(f"config key {key!r} must be non-negative")
        for key in ("rec.dropout", "moe.dropout"):
            if not 0.0 <= self._values[key] < 1.0:
                raise ConfigError(f"config key {key!r} must lie in [0, 1)")
        if self._values["rec.d"] % self._values["rec.heads"] != 0:
            raise ConfigError("rec.heads must divide rec.d")
        if self._values["lm.d"] % self._values["lm.heads"] != 0:
            raise ConfigError("lm.heads must divide lm.d")
        if self._values["dtype"] not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        parts = self._values["data.split"].split(":")
        if len(parts) != 3 or not all(p.isdigit() and int(p) > 0 for p in parts):
            raise ConfigError("data.split must look like '8:1:1'")

    @property
    def split_ratios(self):
        return tuple(int(p) for p in self._values["data.split"].split(":"))

    @property
    def numpy_dtype(self):
        import numpy as np

        return np.float32 if self._values["dtype"] == "float32" else np.float64


def load_config(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in stripped.split("=", 1))
            if key in values:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            values[key] = value
    return Config(values)
