from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Callable, Iterator, Optional, Union

import numpy as np
from scipy.constants import c

from twinbeam.correlations import (
    Correlation2D,
    Profile1D,
    auto_correlation,
    azimuthal_mode_ratio,
    cross_correlation,
    intensity_radial,
    intensity_spectrum,
    mode_ratio_KDelta,
    section_width,
)
from twinbeam.dispersion import Geometry, anisotropy_radius, solve_geometry
from twinbeam.errors import ConfigError, NormalizationError
from twinbeam.kernels import (
    Grid,
    KernelLabel,
    KernelMatrix,
    RidgeKernel,
    TransverseModel,
    azimuthal_rule,
    azimuthal_section_grids,
    build_azimuthal_section,
    build_radial_section,
    build_ridge_kernel,
    build_spectral_kernel,
    iter_transverse_components,
    radial_grid,
    spectral_grid,
    spectral_support,
)
from twinbeam.schmidt import SchmidtDecomposition, TransverseModeSummary, decompose, summarize_components
from twinbeam.utils.config import (
    RunConfig,
    apply_overrides,
    data_path,
    load_config,
    read_config_file,
    resolve_config,
)

if TYPE_CHECKING:
    from twinbeam.store import SweepStore


class SweepParameter(str, Enum):
    PUMP_RADIUS = "pump_radius_w_p"
    PUMP_BANDWIDTH = "pump_bandwidth_dlambda_p"
    FILTER_WIDTH = "filter_width"
    RADIAL_FILTER_WIDTH = "radial_filter_width"

    @property
    def config_key(self) -> str:
        return _PARAMETER_KEYS[self]

    @property
    def unit(self) -> str:
        return "rad/m" if self is SweepParameter.RADIAL_FILTER_WIDTH else "m"


_PARAMETER_KEYS = {
    SweepParameter.PUMP_RADIUS: "pump.w_p",
    SweepParameter.PUMP_BANDWIDTH: "pump.bandwidth",
    SweepParameter.FILTER_WIDTH: "analysis.filter_fwhm",
    SweepParameter.RADIAL_FILTER_WIDTH: "analysis.radial_filter_fwhm",
}

GEOMETRY_METRICS = {
    "w_p_a": "m",
    "theta_ext": "deg",
    "n_p": "1",
    "dn_p_dtheta": "1",
}

TRANSVERSE_METRICS = {
    "K_kphi": "1",
    "K_k": "1",
    "K_phi": "1",
    "KDelta_k": "1",
    "KDelta_phi": "1",
    "KDelta_kphi": "1",
    "KDelta2_k": "1",
    "KDelta2_phi": "1",
    "KDelta2_kphi": "1",
    "Delta_n_k": "rad/m",
    "Delta_A_k": "rad/m",
    "Delta_A2_k": "rad/m",
    "Delta_C_k": "rad/m",
    "Delta_A_phi": "rad",
    "Delta_A2_phi": "rad",
    "Delta_C_phi": "rad",
    "m_count": "1",
}

SPECTRAL_METRICS = {
    "K_omega": "1",
    "KDelta_omega": "1",
    "KDelta2_omega": "1",
    "Delta_n_omega": "rad/s",
    "Delta_A_omega": "rad/s",
    "Delta_A2_omega": "rad/s",
    "Delta_C_omega": "rad/s",
}

METRIC_UNITS: dict[str, str] = {**TRANSVERSE_METRICS, **SPECTRAL_METRICS, **GEOMETRY_METRICS}

SWEEP_SPEC_KEYS = ("name", "parameter", "values", "outputs", "base")

SpectralKernel = Union[KernelMatrix, RidgeKernel]


def _gaussian_passband(axis: np.ndarray, center: float, fwhm: float) -> np.ndarray:
    # amplitude passband whose intensity transmission has the given FWHM
    return np.exp(-2 * math.log(2) * (axis - center) ** 2 / fwhm**2)


def _filtered(kernel: SpectralKernel, row_fwhm: float, col_fwhm: float) -> SpectralKernel:
    rows = _gaussian_passband(kernel.row_grid.points, kernel.row_grid.center, row_fwhm)
    cols = _gaussian_passband(kernel.col_grid.points, kernel.col_grid.center, col_fwhm)
    return kernel.scaled(rows, cols)


def apply_spectral_filter(kernel: SpectralKernel, filter_fwhm: float) -> SpectralKernel:
    """Multiply F_L by identical Gaussian passbands; filter_fwhm is in meters of wavelength."""
    if kernel.label is not KernelLabel.SPECTRAL:
        raise ValueError(f"spectral filtering needs the spectral kernel (got {kernel.label.value})")
    if not filter_fwhm > 0:
        raise ValueError(f"filter width must be positive (got {filter_fwhm})")

    widths = []
    for grid in (kernel.row_grid, kernel.col_grid):
        wavelength = 2 * math.pi * c / grid.center
        widths.append(2 * math.pi * c * filter_fwhm / wavelength**2)
    return _filtered(kernel, *widths)


def apply_radial_filter(kernel: KernelMatrix, fwhm: float) -> KernelMatrix:
    """Gaussian passbands in k_s and k_i centred on the ring; fwhm is in rad/m."""
    if kernel.label not in (KernelLabel.TRANSVERSE, KernelLabel.RADIAL_SECTION):
        raise ValueError(f"radial filtering needs a radial kernel (got {kernel.label.value})")
    if not fwhm > 0:
        raise ValueError(f"radial filter width must be positive (got {fwhm})")
    return _filtered(kernel, fwhm, fwhm)


@dataclass(frozen=True, eq=False)
class TransverseResult:
    summary: TransverseModeSummary
    radial_grid: Grid
    azimuthal_window: float
    component_zero: KernelMatrix
    radial_section: KernelMatrix
    radial_profile: Profile1D
    radial_auto: Correlation2D
    radial_cross: Correlation2D
    azimuthal_section: KernelMatrix
    azimuthal_auto: Correlation2D
    azimuthal_cross: Correlation2D


@dataclass(frozen=True, eq=False)
class SpectralResult:
    kernel: SpectralKernel
    decomposition: SchmidtDecomposition
    profile: Profile1D
    auto: Correlation2D
    cross: Correlation2D


@dataclass(frozen=True, eq=False)
class PointResult:
    config: RunConfig
    geometry: Geometry
    metrics: dict[str, float]
    transverse: Optional[TransverseResult] = None
    spectral: Optional[SpectralResult] = None

    @property
    def units(self) -> dict[str, str]:
        return {name: METRIC_UNITS[name] for name in self.metrics}


def _run_transverse(config: RunConfig, geometry: Geometry) -> tuple[TransverseResult, dict[str, float]]:
    numerics = config.numerics
    radial_filter = config.analysis.radial_filter_fwhm
    model = TransverseModel.from_setup(geometry, config.crystal, config.pump)
    grid = radial_grid(model, numerics)
    _, _, window = azimuthal_rule(model, grid, grid, numerics.azimuthal_points)

    first: list[KernelMatrix] = []

    def components() -> Iterator[KernelMatrix]:
        for kernel in iter_transverse_components(model, grid, grid, numerics):
            if radial_filter is not None:
                kernel = apply_radial_filter(kernel, radial_filter)
            if kernel.order_m == 0:
                first.append(kernel)
            yield kernel

    summary = summarize_components(
        components(),
        workers=numerics.workers,
        n_modes=config.analysis.n_modes,
        truncation=numerics.truncation,
    )

    section = build_radial_section(model, grid, grid)
    if radial_filter is not None:
        section = apply_radial_filter(section, radial_filter)
    profile = intensity_radial(section)
    radial_auto = auto_correlation(section)
    radial_cross = cross_correlation(section)

    rows, cols = azimuthal_section_grids(model, numerics)
    azimuthal = build_azimuthal_section(model, rows, cols)
    azimuthal_auto = auto_correlation(azimuthal)
    azimuthal_cross = cross_correlation(azimuthal)

    delta_A_k = section_width(radial_auto, profile.peak_location)
    delta_A_phi = section_width(azimuthal_auto, 0.0)
    delta_A2_k = section_width(radial_auto, profile.peak_location, power=2)
    delta_A2_phi = section_width(azimuthal_auto, 0.0, power=2)
    KDelta_k = mode_ratio_KDelta(profile, delta_A_k)
    KDelta_phi = azimuthal_mode_ratio(delta_A_phi)
    KDelta2_k = mode_ratio_KDelta(profile, delta_A2_k)
    KDelta2_phi = azimuthal_mode_ratio(delta_A2_phi)

    metrics = {
        "K_kphi": summary.K_kphi,
        "K_k": summary.K_k,
        "K_phi": summary.K_phi,
        "KDelta_k": KDelta_k,
        "KDelta_phi": KDelta_phi,
        "KDelta_kphi": KDelta_k * KDelta_phi,
        "KDelta2_k": KDelta2_k,
        "KDelta2_phi": KDelta2_phi,
        "KDelta2_kphi": KDelta2_k * KDelta2_phi,
        "Delta_n_k": profile.fwhm,
        "Delta_A_k": delta_A_k,
        "Delta_A2_k": delta_A2_k,
        "Delta_C_k": section_width(radial_cross, geometry.kappa_i0),
        "Delta_A_phi": delta_A_phi,
        "Delta_A2_phi": delta_A2_phi,
        "Delta_C_phi": section_width(azimuthal_cross, 0.0),
        "m_count": float(summary.m_count),
    }
    result = TransverseResult(
        summary=summary,
        radial_grid=grid,
        azimuthal_window=window,
        component_zero=first[0],
        radial_section=section,
        radial_profile=profile,
        radial_auto=radial_auto,
        radial_cross=radial_cross,
        azimuthal_section=azimuthal,
        azimuthal_auto=azimuthal_auto,
        azimuthal_cross=azimuthal_cross,
    )
    return result, metrics


def _run_spectral(config: RunConfig, geometry: Geometry) -> tuple[SpectralResult, dict[str, float]]:
    support = spectral_support(geometry, config.crystal, config.pump, config.numerics)
    grid = spectral_grid(geometry, config.crystal, config.pump, config.numerics, support)
    if support.ridge:
        kernel = build_ridge_kernel(geometry, config.crystal, config.pump, grid, support.ridge_reach)
    else:
        kernel = build_spectral_kernel(geometry, config.crystal, config.pump, grid, grid)
    if config.analysis.filter_fwhm is not None:
        kernel = apply_spectral_filter(kernel, config.analysis.filter_fwhm)

    decomposition = decompose(kernel, n_modes=config.analysis.n_modes, truncation=config.numerics.truncation)
    profile = intensity_spectrum(kernel)
    auto = auto_correlation(kernel)
    cross = cross_correlation(kernel)
    delta_A = section_width(auto, profile.peak_location)
    delta_A2 = section_width(auto, profile.peak_location, power=2)

    metrics = {
        "K_omega": decomposition.schmidt_number,
        "KDelta_omega": mode_ratio_KDelta(profile, delta_A),
        "KDelta2_omega": mode_ratio_KDelta(profile, delta_A2),
        "Delta_n_omega": profile.fwhm,
        "Delta_A_omega": delta_A,
        "Delta_A2_omega": delta_A2,
        "Delta_C_omega": section_width(cross, geometry.omega_i0),
    }
    return SpectralResult(kernel, decomposition, profile, auto, cross), metrics


def analyze_point(config: RunConfig, outputs: Optional[tuple[str, ...]] = None) -> PointResult:
    """Run every stage the requested metrics need and collect the metrics.

    With outputs=None the stages follow analysis.transverse and analysis.spectral
    and every computed metric is returned.
    """
    if outputs is None:
        transverse_wanted = config.analysis.transverse
        spectral_wanted = config.analysis.spectral
    else:
        unknown = [name for name in outputs if name not in METRIC_UNITS]
        if unknown:
            raise ValueError(f"Unknown metrics: {', '.join(unknown)}")
        transverse_wanted = any(name in TRANSVERSE_METRICS for name in outputs)
        spectral_wanted = any(name in SPECTRAL_METRICS for name in outputs)

    geometry = solve_geometry(config.crystal, config.pump.wavelength)
    metrics: dict[str, float] = {
        "w_p_a": anisotropy_radius(config.crystal, geometry, config.numerics.x_e),
        "theta_ext": math.degrees(geometry.theta_s_ext),
        "n_p": geometry.n_p,
        "dn_p_dtheta": geometry.dn_p_dtheta,
    }

    transverse = spectral = None
    if transverse_wanted:
        transverse, found = _run_transverse(config, geometry)
        metrics.update(found)
    if spectral_wanted:
        spectral, found = _run_spectral(config, geometry)
        metrics.update(found)

    if outputs is not None:
        metrics = {name: metrics[name] for name in outputs}
    for name, value in metrics.items():
        if not math.isfinite(value):
            raise NormalizationError(f"Metric {name} is not finite ({value!r})")

    return PointResult(
        config=config,
        geometry=geometry,
        metrics=metrics,
        transverse=transverse,
        spectral=spectral,
    )


@dataclass(frozen=True)
class SweepSpec:
    name: str
    parameter: SweepParameter
    values: tuple[float, ...]
    outputs: tuple[str, ...]
    base: RunConfig

    def __post_init__(self):
        object.__setattr__(self, "parameter", SweepParameter(self.parameter))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "outputs", tuple(self.outputs))

        if not self.values:
            raise ValueError("Sweep values must not be empty")
        if any(not math.isfinite(v) or v <= 0 for v in self.values):
            raise ValueError(f"Sweep values of {self.parameter.value} must be positive and finite")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("Sweep values must be strictly increasing")
        if not self.outputs:
            raise ValueError("Sweep outputs must not be empty")
        unknown = [name for name in self.outputs if name not in METRIC_UNITS]
        if unknown:
            raise ValueError(f"Unknown metrics in outputs: {', '.join(unknown)}")

    def point_configs(self) -> list[RunConfig]:
        return [
            apply_overrides(self.base, {self.parameter.config_key: value, "numerics.workers": 1})
            for value in self.values
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "parameter": self.parameter.value,
            "unit": self.parameter.unit,
            "values": list(self.values),
            "outputs": list(self.outputs),
            "base": self.base.to_dict(),
        }


@dataclass(frozen=True)
class SweepRecord:
    parameter_value: float
    metrics: dict[str, float]
    units: dict[str, str]
    error: Optional[str] = None
    config_hash: str = ""
    warnings: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for name, value in self.metrics.items():
            if not math.isfinite(value):
                raise ValueError(f"metric {name} is not finite ({value!r})")
        missing = set(self.metrics) - set(self.units)
        if missing:
            raise ValueError(f"metrics without units: {sorted(missing)}")

    @property
    def ok(self) -> bool:
        return self.error is None


def _evaluate(index: int, source: dict[str, Any], value: float, outputs: tuple[str, ...]) -> tuple[int, SweepRecord]:
    config = resolve_config(source)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            result = analyze_point(config, outputs)
        except Exception as e:
            # any failure stays on its own record
            record = SweepRecord(
                parameter_value=value,
                metrics={},
                units={},
                error=f"{type(e).__name__}: {e}",
                config_hash=config.fingerprint(),
                warnings=tuple(str(w.message) for w in caught),
            )
            return index, record

    record = SweepRecord(
        parameter_value=value,
        metrics=result.metrics,
        units=result.units,
        config_hash=config.fingerprint(),
        warnings=tuple(str(w.message) for w in caught),
    )
    return index, record


def run_sweep(
    spec: SweepSpec,
    workers: int = 1,
    store: Optional["SweepStore"] = None,
    on_record: Optional[Callable[[SweepRecord], None]] = None,
) -> list[SweepRecord]:
    """Evaluate every sweep point; one record per value, in value order.

    Points are independent. Failures are captured on their record and never
    abort the sweep.
    """
    if workers < 1:
        raise ValueError(f"workers must be at least 1 (got {workers})")
    configs = spec.point_configs()

    records: dict[int, SweepRecord] = {}
    pending: list[int] = []
    for index, config in enumerate(configs):
        cached = None
        if store is not None:
            cached = store.get_record(config.fingerprint(), spec.parameter.value, spec.values[index])
        if cached is not None and set(spec.outputs) <= set(cached.metrics):
            record = SweepRecord(
                parameter_value=cached.parameter_value,
                metrics={name: cached.metrics[name] for name in spec.outputs},
                units={name: cached.units[name] for name in spec.outputs},
                config_hash=cached.config_hash,
            )
            records[index] = record
            if on_record:
                on_record(record)
        else:
            pending.append(index)

    def finish(index: int, record: SweepRecord) -> None:
        records[index] = record
        if store is not None:
            store.put_record(spec.parameter.value, record, configs[index].to_dict())
        if on_record:
            on_record(record)

    if workers == 1 or len(pending) <= 1:
        for index in pending:
            finish(*_evaluate(index, configs[index].to_dict(), spec.values[index], spec.outputs))
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(pending))) as pool:
            futures = [
                pool.submit(_evaluate, index, configs[index].to_dict(), spec.values[index], spec.outputs)
                for index in pending
            ]
            for future in as_completed(futures):
                finish(*future.result())

    return [records[index] for index in range(len(configs))]


def bundled_sweep_names() -> list[str]:
    return sorted(p.stem for p in data_path("sweeps").glob("*.yaml"))


def _expand_values(raw: Any) -> list[float]:
    if isinstance(raw, list):
        try:
            return [float(v) for v in raw]
        except (TypeError, ValueError) as e:
            raise ConfigError(f"values: every entry must be a number ({e})") from e
    if isinstance(raw, dict) and len(raw) == 1:
        (kind, args), = raw.items()
        if kind in ("linspace", "logspace") and isinstance(args, dict) and set(args) == {"start", "stop", "num"}:
            try:
                start, stop, num = float(args["start"]), float(args["stop"]), int(args["num"])
            except (TypeError, ValueError) as e:
                raise ConfigError(f"values.{kind}: {e}") from e
            if num < 1:
                raise ConfigError(f"values.{kind}.num must be at least 1 (got {num})")
            if kind == "linspace":
                return np.linspace(start, stop, num).tolist()
            if start <= 0 or stop <= 0:
                raise ConfigError("values.logspace: start and stop must be positive")
            # endpoints are the values themselves, not exponents
            return np.geomspace(start, stop, num).tolist()
    raise ConfigError("values must be a list or {linspace|logspace: {start, stop, num}}")


def _flatten(data: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, dict) and dotted != "crystal.sellmeier":
            flat.update(_flatten(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def resolve_sweep_path(path_or_name: str | Path) -> Path:
    path = Path(path_or_name)
    if path.exists():
        return path
    bundled = data_path("sweeps", f"{path_or_name}.yaml")
    if bundled.exists():
        return bundled
    raise FileNotFoundError(
        f"Sweep spec not found: {path_or_name} (bundled specs: {', '.join(bundled_sweep_names())})"
    )


def load_sweep_spec(path_or_name: str | Path, base: Optional[RunConfig] = None) -> SweepSpec:
    path = resolve_sweep_path(path_or_name)
    raw = read_config_file(path)

    unknown = sorted(set(raw) - set(SWEEP_SPEC_KEYS))
    if unknown:
        raise ConfigError(f"{path}: unknown sweep spec keys: {', '.join(unknown)}")
    for key in ("parameter", "values", "outputs"):
        if key not in raw:
            raise ConfigError(f"{path}: sweep spec needs '{key}'")

    try:
        parameter = SweepParameter(raw["parameter"])
    except ValueError as e:
        known = ", ".join(p.value for p in SweepParameter)
        raise ConfigError(f"{path}: unknown parameter {raw['parameter']!r} (known: {known})") from e

    outputs = raw["outputs"]
    if outputs == "all":
        outputs = list(METRIC_UNITS)
    if not isinstance(outputs, list):
        raise ConfigError(f"{path}: outputs must be a list of metric names or 'all'")

    base = base if base is not None else load_config()
    overrides = raw.get("base") or {}
    if not isinstance(overrides, dict):
        raise ConfigError(f"{path}: base must be a mapping")
    if overrides:
        base = apply_overrides(base, _flatten(overrides))

    try:
        return SweepSpec(
            name=str(raw.get("name", path.stem)),
            parameter=parameter,
            values=tuple(_expand_values(raw["values"])),
            outputs=tuple(outputs),
            base=base,
        )
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(f"{path}: {e}") from e
