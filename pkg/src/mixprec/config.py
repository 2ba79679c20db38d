"""Flat ``key=value`` config files with ``#`` comments."""

from __future__ import annotations

from pathlib import Path


class ConfigError(ValueError):
    pass


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class Config:
    def __init__(self, values: dict[str, str], allowed: set[str] | None = None):
        if allowed is not None:
            unknown = set(values) - allowed
            if unknown:
                raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        self.values = dict(values)

    @classmethod
    def parse(cls, text: str, allowed: set[str] | None = None) -> "Config":
        values = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key=value, got {raw.strip()!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ConfigError(f"line {lineno}: empty key")
            values[key] = val
        return cls(values, allowed)

    @classmethod
    def load(cls, path: str | Path, allowed: set[str] | None = None) -> "Config":
        return cls.parse(Path(path).read_text(encoding="utf-8"), allowed)

    def __contains__(self, key):
        return key in self.values

    def _get(self, key, default, conv, what):
        if key not in self.values:
            return default
        try:
            return conv(self.values[key])
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: expected {what}, got {self.values[key]!r}") from exc

    def str(self, key, default=None):
        return self.values.get(key, default)

    def int(self, key, default=None):
        return self._get(key, default, int, "an integer")

    def float(self, key, default=None):
        return self._get(key, default, float, "a number")

    def optional_float(self, key, default=None):
        if self.values.get(key, "").lower() in ("none", "off", ""):
            return default
        return self.float(key, default)

    def bool(self, key, default=None):
        def conv(v):
            v = v.lower()
            if v in _TRUE:
                return True
            if v in _FALSE:
                return False
            raise ValueError(v)
        return self._get(key, default, conv, "a boolean")

    def int_list(self, key, default=None):
        return self._get(key, default, lambda v: [int(p) for p in v.split(",") if p.strip()], "comma-separated integers")

    def str_list(self, key, default=None):
        return self._get(key, default, lambda v: [p.strip() for p in v.split(",") if p.strip()], "a comma-separated list")
