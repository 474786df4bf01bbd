"""Flat key-value configuration files: ``key = value``, ``#`` comments, UTF-8."""

from __future__ import annotations

from pathlib import Path


class ConfigurationError(ValueError):
    """Invalid or incomplete run configuration (maps to CLI exit code 2)."""


def parse_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    values = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def format_config(values: dict) -> str:
    return "".join(f"{k} = {v}\n" for k, v in values.items())


class ConfigMap:
    """Typed access over parsed key-value pairs; paths resolve to the file."""

    def __init__(self, values: dict, base_dir: Path):
        self.values = dict(values)
        self.base_dir = Path(base_dir)

    @classmethod
    def load(cls, path) -> "ConfigMap":
        path = Path(path)
        return cls(parse_config_file(path), path.parent)

    def has(self, key: str) -> bool:
        return key in self.values

    def get_str(self, key, default=None):
        if key not in self.values:
            if default is None:
                raise ConfigurationError(f"missing required config key: {key}")
            return default
        return self.values[key]

    def get_int(self, key, default=None):
        raw = self.get_str(key, None if default is None else str(default))
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigurationError(f"config key {key}: expected integer, got {raw!r}") from exc

    def get_float(self, key, default=None):
        raw = self.get_str(key, None if default is None else repr(default))
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigurationError(f"config key {key}: expected number, got {raw!r}") from exc

    def get_list(self, key, default=None):
        raw = self.get_str(key, default)
        return [part.strip() for part in raw.split(",") if part.strip()]

    def get_path(self, key, default=None, must_exist=True) -> Path:
        raw = self.get_str(key, default)
        path = Path(raw)
        if not path.is_absolute():
            path = self.base_dir / path
        if must_exist and not path.exists():
            raise ConfigurationError(f"config key {key}: path does not exist: {path}")
        return path

    def get_path_list(self, key, must_exist=True):
        paths = []
        for raw in self.get_list(key):
            path = Path(raw)
            if not path.is_absolute():
                path = self.base_dir / path
            if must_exist and not path.exists():
                raise ConfigurationError(f"config key {key}: path does not exist: {path}")
            paths.append(path)
        if not paths:
            raise ConfigurationError(f"config key {key}: empty path list")
        return paths
