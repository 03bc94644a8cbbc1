"""Run configuration: TOML file + RFM_* environment overrides."""
from __future__ import annotations

import math
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .datasets import SyntheticShiftSpec
from .errors import ConfigError

ABLATIONS = ("full", "source_only", "no_fm", "no_ra", "no_aa", "no_pe")


@dataclass
class LogSettings:
    level: str = "INFO"


@dataclass
class RunConfig:
    curvature: float = -1.0
    dim: int = 16
    hidden: int = 64
    layers: int = 3
    lambda_rad: float = 0.1
    lambda_ang: float = 0.1
    lambda_fm: float = 0.1
    zeta: float = 0.7
    temperature: float = 10.0
    epsilon: float = 1e-8
    lr: float = 1e-4
    weight_decay: float = 1e-12
    batch_size: int = 32
    epochs: int = 20
    steps_per_epoch: int | None = None
    seed: int = 0
    fm_detach_embeddings: bool = False
    polar_disentangle: bool = True
    field_hidden: int = 64
    field_layers: int = 2
    ablation: str = "full"
    source_path: str | None = None
    target_path: str | None = None
    log: LogSettings = field(default_factory=LogSettings)
    synthetic: SyntheticShiftSpec = field(default_factory=SyntheticShiftSpec)

    @property
    def lambdas(self) -> tuple[float, float, float]:
        return (self.lambda_rad, self.lambda_ang, self.lambda_fm)

    def validate(self) -> RunConfig:
        if not math.isfinite(self.curvature):
            raise ConfigError(f"curvature must be finite, got {self.curvature}")
        if self.dim < 2 or self.hidden < 1 or self.layers < 1 or self.field_hidden < 1 or self.field_layers < 1:
            raise ConfigError("dim must be >= 2 and hidden/layers/field sizes >= 1")
        if min(self.lambdas) < 0:
            raise ConfigError(f"loss weights must be non-negative, got {self.lambdas}")
        if not 0.0 <= self.zeta < 1.0:
            raise ConfigError(f"zeta must lie in [0, 1), got {self.zeta}")
        if self.temperature <= 0 or self.epsilon <= 0 or self.lr <= 0 or self.weight_decay < 0:
            raise ConfigError("temperature, epsilon and lr must be positive, weight_decay non-negative")
        if self.batch_size < 1 or self.epochs < 1 or (self.steps_per_epoch is not None and self.steps_per_epoch < 1):
            raise ConfigError("batch_size, epochs and steps_per_epoch must be >= 1")
        if self.ablation not in ABLATIONS:
            raise ConfigError(f"unknown ablation {self.ablation!r}; expected one of {', '.join(ABLATIONS)}")
        return self


def apply_ablation(config: RunConfig) -> RunConfig:
    """Fold the ``ablation`` preset into the loss weights and switches."""
    name = config.ablation
    if name == "source_only":
        return replace(config, lambda_rad=0.0, lambda_ang=0.0, lambda_fm=0.0)
    if name == "no_fm":
        return replace(config, lambda_fm=0.0)
    if name == "no_ra":
        return replace(config, lambda_rad=0.0)
    if name == "no_aa":
        return replace(config, lambda_ang=0.0)
    if name == "no_pe":
        return replace(config, polar_disentangle=False)
    return config


def load_config(config_path: str | Path | None = None) -> RunConfig:
    """Load a run config from TOML + environment overrides.

    Top-level keys map onto :class:`RunConfig`; ``[log]`` and ``[synthetic]``
    tables hold the logging level and the generator spec. Unknown keys are errors.
    """
    file_data = _read_toml(config_path) if config_path else {}
    nested = {"log", "synthetic"}
    top = {key: value for key, value in file_data.items() if key not in nested}
    config = RunConfig(
        **_coerce(RunConfig, top, skip=nested, where="config"),
        log=LogSettings(**_coerce(LogSettings, _table(file_data, "log"), where="[log]")),
        synthetic=_load_synthetic(_table(file_data, "synthetic")),
    )
    return _apply_env_overrides(config).validate()


def load_synthetic_spec(spec_path: str | Path) -> SyntheticShiftSpec:
    spec = _load_synthetic(_read_toml(spec_path))
    spec.validate()
    return spec


def _read_toml(path: str | Path) -> dict[str, Any]:
    config_file = Path(path).expanduser()
    if not config_file.exists():
        raise ConfigError(f"config file not found: {config_file}")
    try:
        with config_file.open("rb") as fh:
            return tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{config_file}: {exc}") from exc


def _table(data: Mapping[str, Any], name: str) -> dict[str, Any]:
    raw = data.get(name, {})
    if not isinstance(raw, dict):
        raise ConfigError(f"[{name}] must be a table")
    return raw


def _load_synthetic(raw: Mapping[str, Any]) -> SyntheticShiftSpec:
    return SyntheticShiftSpec(**_coerce(SyntheticShiftSpec, raw, where="[synthetic]"))


def _coerce(
    cls: type, raw: Mapping[str, Any], where: str, skip: frozenset[str] | set[str] = frozenset()
) -> dict[str, Any]:
    known = {f.name: f for f in fields(cls) if f.name not in skip}
    unknown = sorted(set(raw) - set(known))
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")
    out: dict[str, Any] = {}
    for key, value in raw.items():
        caster = _CASTERS.get(str(known[key].type))
        if caster is None:
            raise ConfigError(f"{where} key {key!r} cannot be set from a file")
        try:
            out[key] = caster(value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{where} key {key!r}: {exc}") from exc
    return out


def _to_bool(value: object) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in {"1", "true", "yes", "on"}:
        return True
    if text in {"0", "false", "no", "off"}:
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _to_int(value: object) -> int:
    if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
        raise ValueError(f"not an integer: {value!r}")
    return int(value)  # type: ignore[call-overload]


def _optional(caster: Callable[[object], Any]) -> Callable[[object], Any]:
    def cast(value: object) -> Any:
        if value is None or (isinstance(value, str) and not value.strip()):
            return None
        return caster(value)

    return cast


def _float_list(value: object) -> list[float]:
    if isinstance(value, str):
        value = [item for item in value.split(",") if item.strip()]
    if not isinstance(value, list):
        raise ValueError(f"expected a list of numbers, got {value!r}")
    return [float(item) for item in value]


_CASTERS: dict[str, Callable[[object], Any]] = {
    "float": lambda v: float(v),  # type: ignore[arg-type]
    "int": _to_int,
    "bool": _to_bool,
    "str": str,
    "int | None": _optional(_to_int),
    "str | None": _optional(str),
    "list[float]": _float_list,
}


def _apply_env_overrides(config: RunConfig) -> RunConfig:
    updated = config
    for f in fields(RunConfig):
        if f.name in {"log", "synthetic"}:
            continue
        raw_value = os.getenv(f"RFM_{f.name.upper()}")
        if raw_value is None:
            continue
        try:
            value = _CASTERS[str(f.type)](raw_value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"RFM_{f.name.upper()}: {exc}") from exc
        updated = replace(updated, **{f.name: value})
    level = os.getenv("RFM_LOG_LEVEL")
    if level:
        updated = replace(updated, log=LogSettings(level=level.strip()))
    return updated


__all__ = [
    "ABLATIONS",
    "LogSettings",
    "RunConfig",
    "apply_ablation",
    "load_config",
    "load_synthetic_spec",
]
