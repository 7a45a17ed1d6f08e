"""Strict loading of dataclass configs from YAML documents."""
from __future__ import annotations

import dataclasses
import os
import typing
from pathlib import Path
from typing import Any, Mapping

import yaml


class ConfigError(ValueError):
    """Invalid configuration value or document layout."""


def from_mapping(cls, data: Mapping[str, Any] | None, where: str = ""):
    """Build dataclass ``cls`` from ``data``, rejecting unknown keys.

    Lists are converted to tuples so frozen configs stay hashable.
    """
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(data) - names)
    if unknown:
        prefix = f"{where}." if where else ""
        raise ConfigError(f"unknown key(s) {', '.join(prefix + k for k in unknown)}")
    defaults = {f.name: f.default for f in dataclasses.fields(cls)}
    kwargs = {k: _coerce(_tupleize(v), defaults.get(k), f"{where}.{k}" if where else k)
              for k, v in data.items()}
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where or cls.__name__}: {exc}") from exc


def _coerce(value, default, name):
    # YAML 1.1 reads exponent floats without a dot or sign (``27.4e9``) as strings
    if isinstance(value, str) and isinstance(default, float):
        try:
            return float(value)
        except ValueError:
            raise ConfigError(f"{name}: expected a number, got {value!r}") from None
    return value


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


def to_mapping(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            value = to_mapping(value)
        elif isinstance(value, tuple):
            value = [to_mapping(v) if dataclasses.is_dataclass(v) else v for v in value]
        out[f.name] = value
    return out


def publish(tmp, path) -> None:
    """Give a ``mkstemp`` file the usual umask permissions and rename it to ``path``."""
    umask = os.umask(0)
    os.umask(umask)
    os.chmod(tmp, 0o666 & ~umask)
    os.replace(tmp, path)


def load_yaml(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            doc = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc


def check_sections(doc: Mapping[str, Any], allowed: typing.Iterable[str], where: str):
    unknown = sorted(set(doc) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown section(s) {', '.join(unknown)}")
