"""Flat ``key: value`` experiment configs.

Keys are the fields of :class:`fairloop.sim.ExperimentConfig`; anything left
out takes its default. Validation reports every bad key at once.
"""

from __future__ import annotations

from dataclasses import fields
from pathlib import Path

import yaml

from .sim import ExperimentConfig


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


_KINDS = {"int": (int,), "float": (int, float), "str": (str,), "bool": (bool,)}


def _check_type(key: str, value, annotation: str) -> str | None:
    optional = annotation.endswith("| None")
    base = annotation.replace("| None", "").strip()
    if value is None:
        return None if optional else f"{key}: must not be empty"
    kinds = _KINDS[base]
    # bool is an int subclass; only accept it where a bool is wanted
    if isinstance(value, bool) and base != "bool":
        return f"{key}: expected {base}, got bool"
    if not isinstance(value, kinds):
        return f"{key}: expected {base}, got {type(value).__name__}"
    return None


def config_from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError(["<root>: expected a flat mapping of key: value"])
    known = {f.name: f for f in fields(ExperimentConfig)}
    problems = [f"{k}: unknown key" for k in data if k not in known]
    clean = {}
    for key, value in data.items():
        if key not in known:
            continue
        err = _check_type(key, value, str(known[key].type))
        if err:
            problems.append(err)
        else:
            clean[key] = float(value) if str(known[key].type).startswith("float") and value is not None else value
    cfg = ExperimentConfig(**clean)
    problems += cfg.validate()
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(path) -> ExperimentConfig:
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"<file>: not parseable: {exc}"]) from None
    return config_from_dict(data or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
