"""Run configuration: plain-text key=value files plus defaults.

Unknown keys are kept (forward compatibility) but only the keys below are
read by the engine. Booleans accept true/false/1/0/yes/no.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path

from .errors import InputError

_BOOL_TRUE = {"true", "1", "yes", "on"}
_BOOL_FALSE = {"false", "0", "no", "off"}

DEFAULTS = {
    "ingest.error_threshold": "0.01",
    "novelty.runs": "10",
    "novelty.seed": "12345",
    "novelty.percentile_rule": "nearest_rank",
    "novelty.pair_multiplicity": "false",
    "diversity.min_links": "1000",
    "diversity.fractional": "false",
    "diversity.unordered": "false",
    "diversity.symmetric": "false",
    "hdfe.se_type": "classical",
    "hdfe.tol": "1e-8",
    "hdfe.max_iter": "10000",
}


@dataclass
class RunConfig:
    """Typed view over a key=value mapping with engine defaults."""

    values: dict[str, str] = field(default_factory=dict)

    def get(self, key: str) -> str:
        if key in self.values:
            return self.values[key]
        if key in DEFAULTS:
            return DEFAULTS[key]
        raise InputError(f"unknown config key: {key}")

    def get_int(self, key: str) -> int:
        raw = self.get(key)
        try:
            return int(raw)
        except ValueError as exc:
            raise InputError(f"config key {key}={raw!r} is not an integer") from exc

    def get_float(self, key: str) -> float:
        raw = self.get(key)
        try:
            return float(raw)
        except ValueError as exc:
            raise InputError(f"config key {key}={raw!r} is not a number") from exc

    def get_bool(self, key: str) -> bool:
        raw = self.get(key).strip().lower()
        if raw in _BOOL_TRUE:
            return True
        if raw in _BOOL_FALSE:
            return False
        raise InputError(f"config key {key}={raw!r} is not a boolean")

    def with_overrides(self, overrides: dict[str, str]) -> "RunConfig":
        merged = dict(self.values)
        merged.update(overrides)
        return RunConfig(merged)

    def digest(self) -> str:
        """Stable hash over effective (defaults + overrides) settings."""
        effective = dict(DEFAULTS)
        effective.update(self.values)
        blob = "\n".join(f"{k}={effective[k]}" for k in sorted(effective))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise InputError(f"config line {lineno}: expected key=value, got {line!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise InputError(f"config file not found: {p}")
    return RunConfig(parse_config_text(p.read_text(encoding="utf-8")))
