from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import yaml

from twinbeam.dispersion import (
    SELLMEIER_SETS,
    CrystalConfig,
    SellmeierSet,
    anisotropy_radius,
    solve_geometry,
)
from twinbeam.errors import ConfigError, DomainError, PhaseMatchingError, SellmeierError, TwinBeamError
from twinbeam.kernels import NumericsConfig, PumpConfig, duration_from_bandwidth


REQUIRED = object()

# (kind, default) per key; kinds are checked by _coerce
SCHEMA: dict[str, dict[str, tuple[str, Any]]] = {
    "crystal": {
        "name": ("str", "BBO"),
        "length": ("positive", REQUIRED),
        "cut_angle": ("degrees", REQUIRED),
        "interaction": ("interaction", "type-I-eoo"),
        "sellmeier": ("sellmeier", "bbo-eimerl"),
    },
    "pump": {
        "wavelength": ("positive", REQUIRED),
        "w_p": ("positive", REQUIRED),
        "bandwidth": ("positive_or_null", None),
        "duration": ("positive_or_null", None),
        "normal_incidence": ("bool", True),
    },
    "numerics": {
        "radial_points": ("count", 256),
        "spectral_points": ("count", 512),
        "azimuthal_points": ("count", 128),
        "azimuthal_section_points": ("count", 201),
        "m_max": ("order", 16384),
        "m_norm_cutoff": ("fraction", 1e-4),
        "support_threshold": ("fraction", 1e-3),
        "points_per_width": ("positive", 4.0),
        "max_radial_points": ("count", 384),
        "max_spectral_points": ("count", 2048),
        "ridge_points_per_width": ("positive", 8.0),
        "max_ridge_points": ("count", 65536),
        "truncation": ("fraction", 1e-12),
        "workers": ("workers", 1),
        "grid_scale": ("positive", 1.0),
        "x_e": ("positive_or_null", None),
    },
    "analysis": {
        "filter_fwhm": ("positive_or_null", None),
        "radial_filter_fwhm": ("positive_or_null", None),
        "n_modes": ("workers", 3),
        "transverse": ("bool", True),
        "spectral": ("bool", True),
    },
    "output": {
        "directory": ("str", "twinbeam-out"),
    },
}

# keys that change scheduling but never results
SCHEDULING_KEYS = (("numerics", "workers"),)


@dataclass(frozen=True)
class AnalysisConfig:
    filter_fwhm: float | None = None
    radial_filter_fwhm: float | None = None
    n_modes: int = 3
    transverse: bool = True
    spectral: bool = True


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "twinbeam-out"


@dataclass(frozen=True, eq=False)
class RunConfig:
    crystal: CrystalConfig
    pump: PumpConfig
    numerics: NumericsConfig
    analysis: AnalysisConfig
    output: OutputConfig
    source: dict[str, Any]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RunConfig) and self.source == other.source

    __hash__ = None

    def to_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self.source)

    def fingerprint(self) -> str:
        source = self.to_dict()
        for section, key in SCHEDULING_KEYS:
            source.get(section, {}).pop(key, None)
        return hash_config(source)


def data_path(*parts: str) -> Path:
    return Path(str(resources.files("twinbeam").joinpath("data", *parts)))


DEFAULT_CONFIG_PATH = data_path("default.yaml")


def read_config_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)

    if not path.exists():
        raise FileNotFoundError(f"Config file not found: {path}")

    content = path.read_text()

    if path.suffix == ".json":
        try:
            data = json.loads(content)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}: {e.msg}") from e
    else:
        try:
            data = yaml.safe_load(content)
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
            raise ConfigError(f"{where}: {getattr(e, 'problem', None) or e}") from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def hash_config(config: dict) -> str:
    normalized = json.dumps(config, sort_keys=True, default=str)
    return hashlib.sha256(normalized.encode()).hexdigest()[:16]


def _issue(field: str, message: str, severity: str = "error") -> dict:
    return {"passed": False, "field": field, "message": message, "severity": severity}


def _as_number(value: Any) -> float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return None
    return None


def _coerce(kind: str, value: Any) -> tuple[Any, str | None]:
    if kind == "str":
        return (value, None) if isinstance(value, str) and value else (value, "must be a non-empty string")
    if kind == "bool":
        return (value, None) if isinstance(value, bool) else (value, "must be true or false")
    if kind == "interaction":
        return (value, None) if value == "type-I-eoo" else (value, "only 'type-I-eoo' is supported")
    if kind == "sellmeier":
        if isinstance(value, str):
            if value in SELLMEIER_SETS:
                return value, None
            return value, f"unknown Sellmeier set {value!r} (known: {', '.join(sorted(SELLMEIER_SETS))})"
        if isinstance(value, dict):
            try:
                SellmeierSet.from_dict(value)
            except (KeyError, TypeError, ValueError) as e:
                return value, f"invalid Sellmeier set: {e}"
            return value, None
        return value, "must be a set name or a mapping"
    if kind in ("count", "order", "workers"):
        if isinstance(value, bool) or not isinstance(value, int):
            return value, "must be an integer"
        minimum = {"count": 4, "order": 0, "workers": 1}[kind]
        return (value, None) if value >= minimum else (value, f"must be at least {minimum} (got {value})")
    if kind == "positive_or_null" and value is None:
        return None, None

    number = _as_number(value)
    if number is None or not math.isfinite(number):
        return value, "must be a finite number"
    if kind in ("positive", "positive_or_null"):
        return (number, None) if number > 0 else (number, f"must be positive (got {value})")
    if kind == "fraction":
        return (number, None) if 0 < number < 1 else (number, f"must lie in (0, 1) (got {value})")
    if kind == "degrees":
        return (number, None) if 0 < number < 90 else (number, f"must lie in (0, 90) degrees (got {value})")
    raise AssertionError(f"unknown schema kind {kind}")


def _normalize(raw: dict[str, Any]) -> tuple[dict[str, Any], list[dict]]:
    issues: list[dict] = []
    resolved: dict[str, Any] = {}

    for section in raw:
        if section not in SCHEMA:
            issues.append(_issue(section, "unknown section"))

    for section, fields in SCHEMA.items():
        given = raw.get(section) or {}
        if not isinstance(given, dict):
            issues.append(_issue(section, "must be a mapping"))
            given = {}
        for key in given:
            if key not in fields:
                issues.append(_issue(f"{section}.{key}", "unknown key"))

        resolved[section] = {}
        for key, (kind, default) in fields.items():
            name = f"{section}.{key}"
            if key not in given or given[key] is None and default is REQUIRED:
                if default is REQUIRED:
                    issues.append(_issue(name, "is required"))
                    continue
                resolved[section][key] = copy.deepcopy(default)
                continue
            value, problem = _coerce(kind, given[key])
            if problem:
                issues.append(_issue(name, problem))
            resolved[section][key] = value

    pump = resolved["pump"]
    if pump.get("bandwidth") is None and pump.get("duration") is None:
        issues.append(_issue("pump.bandwidth", "one of pump.bandwidth or pump.duration is required"))
    elif pump.get("bandwidth") is not None and pump.get("duration") is not None:
        issues.append(_issue("pump.bandwidth", "give pump.bandwidth or pump.duration, not both"))

    return resolved, issues


def _build(resolved: dict[str, Any]) -> RunConfig:
    crystal_source = resolved["crystal"]
    sellmeier = crystal_source["sellmeier"]
    sellmeier = SELLMEIER_SETS[sellmeier] if isinstance(sellmeier, str) else SellmeierSet.from_dict(sellmeier)
    crystal = CrystalConfig(
        length=crystal_source["length"],
        cut_angle=math.radians(crystal_source["cut_angle"]),
        sellmeier=sellmeier,
        interaction=crystal_source["interaction"],
        name=crystal_source["name"],
    )

    pump_source = resolved["pump"]
    duration = pump_source["duration"]
    if duration is None:
        duration = duration_from_bandwidth(pump_source["bandwidth"], pump_source["wavelength"])
    pump = PumpConfig(
        wavelength=pump_source["wavelength"],
        w_p=pump_source["w_p"],
        duration=duration,
        normal_incidence=pump_source["normal_incidence"],
    )

    return RunConfig(
        crystal=crystal,
        pump=pump,
        numerics=NumericsConfig(**resolved["numerics"]),
        analysis=AnalysisConfig(**resolved["analysis"]),
        output=OutputConfig(**resolved["output"]),
        source=resolved,
    )


ERROR_FIELDS = (
    (SellmeierError, "crystal.sellmeier"),
    (PhaseMatchingError, "crystal.cut_angle"),
    (DomainError, "pump.wavelength"),
)


def _blamed_field(error: Exception) -> str:
    for kind, field in ERROR_FIELDS:
        if isinstance(error, kind):
            return field
    return "config"


def validate_config(raw: dict[str, Any]) -> list[dict]:
    resolved, issues = _normalize(raw)

    if not any(i["severity"] == "error" for i in issues):
        try:
            config = _build(resolved)
            geometry = solve_geometry(config.crystal, config.pump.wavelength)
            w_p_a = anisotropy_radius(config.crystal, geometry, config.numerics.x_e)
            if config.pump.w_p < w_p_a:
                issues.append(_issue(
                    "pump.w_p",
                    f"w_p = {config.pump.w_p:.3g} m is below the anisotropy radius "
                    f"{w_p_a:.3g} m; anisotropy is not modeled",
                    severity="warning",
                ))
        except (TwinBeamError, ValueError) as e:
            issues.append(_issue(_blamed_field(e), str(e)))

    if not issues:
        issues.append({
            "passed": True,
            "field": "",
            "message": "Config checks passed",
            "severity": "info",
        })

    return issues


def resolve_config(raw: dict[str, Any]) -> RunConfig:
    issues = validate_config(raw)
    errors = [i for i in issues if not i["passed"] and i["severity"] == "error"]
    if errors:
        lines = "\n".join(f"  {i['field']}: {i['message']}" for i in errors)
        raise ConfigError(f"Invalid config:\n{lines}", issues)
    resolved, _ = _normalize(raw)
    return _build(resolved)


def load_config(path: str | Path | None = None) -> RunConfig:
    return resolve_config(read_config_file(path or DEFAULT_CONFIG_PATH))


def dump_config(config: RunConfig) -> str:
    return yaml.safe_dump(config.source, sort_keys=False)


def set_dotted(data: dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    target = data
    for key in keys[:-1]:
        target = target.setdefault(key, {})
    target[keys[-1]] = value


def apply_overrides(config: RunConfig | dict[str, Any], overrides: dict[str, Any]) -> RunConfig:
    source = config.to_dict() if isinstance(config, RunConfig) else copy.deepcopy(config)
    for dotted, value in overrides.items():
        set_dotted(source, dotted, value)
        # bandwidth and duration are two spellings of one quantity
        if dotted == "pump.bandwidth" and value is not None:
            set_dotted(source, "pump.duration", None)
        elif dotted == "pump.duration" and value is not None:
            set_dotted(source, "pump.bandwidth", None)
    return resolve_config(source)
