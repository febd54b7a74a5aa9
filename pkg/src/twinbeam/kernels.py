from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Iterator

import numpy as np
from scipy import sparse
from scipy.constants import c

from twinbeam.dispersion import (
    CrystalConfig,
    Geometry,
    wavenumber_extraordinary,
    wavenumber_ordinary,
)
from twinbeam.errors import DomainError, GridTooNarrowError, NormalizationError


ORDER_BLOCK = 64
SCAN_POINTS = 2001
PUMP_OFFSETS = 33
# pump factor below exp(-36) is dropped from the azimuthal integral
AZIMUTHAL_TAIL = 36.0
# section lattices extend until the pump amplitude falls to 1e-8
SECTION_TAIL = math.log(1e8)
NEGLIGIBLE_AMPLITUDE = 1e-2
# relative inset of spectral grids from the Sellmeier window edges
WINDOW_MARGIN = 1e-6


def bandwidth_from_duration(duration: float, wavelength: float) -> float:
    omega = 2 * math.pi * c / wavelength
    return 4 * math.pi * math.sqrt(2 * math.log(2)) * c / (omega**2 * duration)


def duration_from_bandwidth(bandwidth: float, wavelength: float) -> float:
    omega = 2 * math.pi * c / wavelength
    return 4 * math.pi * math.sqrt(2 * math.log(2)) * c / (omega**2 * bandwidth)


@dataclass(frozen=True)
class PumpConfig:
    wavelength: float
    w_p: float
    duration: float
    normal_incidence: bool = True

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"pump wavelength must be positive (got {self.wavelength})")
        if not self.w_p > 0:
            raise ValueError(f"pump radius w_p must be positive (got {self.w_p})")
        if not self.duration > 0:
            raise ValueError(f"pump duration must be positive (got {self.duration})")
        if not self.normal_incidence:
            raise ValueError("only normal pump incidence is modeled")

    @property
    def omega0(self) -> float:
        return 2 * math.pi * c / self.wavelength

    @property
    def bandwidth(self) -> float:
        return bandwidth_from_duration(self.duration, self.wavelength)

    @classmethod
    def from_bandwidth(
        cls,
        wavelength: float,
        w_p: float,
        bandwidth: float,
        normal_incidence: bool = True,
    ) -> "PumpConfig":
        if not bandwidth > 0:
            raise ValueError(f"pump bandwidth must be positive (got {bandwidth})")
        return cls(
            wavelength=wavelength,
            w_p=w_p,
            duration=duration_from_bandwidth(bandwidth, wavelength),
            normal_incidence=normal_incidence,
        )


@dataclass(frozen=True)
class NumericsConfig:
    radial_points: int = 256
    spectral_points: int = 512
    azimuthal_points: int = 128
    azimuthal_section_points: int = 201
    m_max: int = 16384
    m_norm_cutoff: float = 1e-4
    support_threshold: float = 1e-3
    points_per_width: float = 4.0
    max_radial_points: int = 384
    max_spectral_points: int = 2048
    ridge_points_per_width: float = 8.0
    max_ridge_points: int = 65536
    truncation: float = 1e-12
    workers: int = 1
    grid_scale: float = 1.0
    x_e: float | None = None

    def __post_init__(self):
        for name in (
            "radial_points",
            "spectral_points",
            "azimuthal_points",
            "azimuthal_section_points",
            "max_radial_points",
            "max_spectral_points",
            "max_ridge_points",
        ):
            if getattr(self, name) < 4:
                raise ValueError(f"{name} must be at least 4 (got {getattr(self, name)})")
        if self.m_max < 0:
            raise ValueError(f"m_max must be non-negative (got {self.m_max})")
        for name in ("m_norm_cutoff", "support_threshold", "truncation"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1) (got {getattr(self, name)})")
        for name in ("points_per_width", "ridge_points_per_width"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive (got {getattr(self, name)})")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1 (got {self.workers})")
        if not self.grid_scale > 0:
            raise ValueError(f"grid_scale must be positive (got {self.grid_scale})")
        if self.x_e is not None and not self.x_e > 0:
            raise ValueError(f"x_e must be positive (got {self.x_e})")


class GridKind(str, Enum):
    RADIAL = "radial"
    AZIMUTHAL = "azimuthal"
    SPECTRAL = "spectral"


@dataclass(frozen=True, eq=False)
class Grid:
    points: np.ndarray
    weights: np.ndarray
    kind: GridKind
    interval: tuple[float, float]
    center: float = 0.0

    def __post_init__(self):
        points = np.array(self.points, dtype=float)
        weights = np.array(self.weights, dtype=float)
        points.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "kind", GridKind(self.kind))
        object.__setattr__(self, "interval", (float(self.interval[0]), float(self.interval[1])))

        if points.ndim != 1 or points.shape != weights.shape or len(points) < 2:
            raise ValueError("grid points and weights must be 1D arrays of equal length >= 2")
        if np.any(np.diff(points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("grid weights must be positive")
        span = self.interval[1] - self.interval[0]
        if not math.isclose(math.fsum(weights), span, rel_tol=1e-10):
            raise ValueError(
                f"grid weights sum to {math.fsum(weights)!r}, not the interval length {span!r}"
            )

    def __len__(self) -> int:
        return len(self.points)

    @property
    def span(self) -> float:
        return self.interval[1] - self.interval[0]

    def nearest_index(self, value: float) -> int:
        return int(np.argmin(np.abs(self.points - value)))

    def describe(self) -> dict:
        return {
            "kind": self.kind.value,
            "points": len(self),
            "start": self.interval[0],
            "stop": self.interval[1],
            "center": self.center,
        }


def gauss_legendre_grid(kind: GridKind, start: float, stop: float, n: int, center: float | None = None) -> Grid:
    nodes, weights = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (stop - start)
    mid = 0.5 * (stop + start)
    return Grid(
        points=mid + half * nodes,
        weights=half * weights,
        kind=kind,
        interval=(start, stop),
        center=mid if center is None else center,
    )


def trapezoid_grid(kind: GridKind, start: float, stop: float, n: int, center: float | None = None) -> Grid:
    points = np.linspace(start, stop, n)
    step = (stop - start) / (n - 1)
    weights = np.full(n, step)
    weights[0] = weights[-1] = 0.5 * step
    return Grid(
        points=points,
        weights=weights,
        kind=kind,
        interval=(start, stop),
        center=0.5 * (start + stop) if center is None else center,
    )


def periodic_grid(kind: GridKind, n: int, center: float = 0.0) -> Grid:
    step = 2 * math.pi / n
    return Grid(
        points=-math.pi + step * np.arange(n),
        weights=np.full(n, step),
        kind=kind,
        interval=(-math.pi, math.pi),
        center=center,
    )


class KernelLabel(str, Enum):
    TRANSVERSE = "T_m"
    RADIAL_SECTION = "T_radial"
    AZIMUTHAL_SECTION = "T_azimuthal"
    SPECTRAL = "F_L"


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    values: np.ndarray
    row_grid: Grid
    col_grid: Grid
    label: KernelLabel
    order_m: int | None = None
    negligible: bool = False

    def __post_init__(self):
        values = np.array(self.values, dtype=complex)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "label", KernelLabel(self.label))
        if values.shape != (len(self.row_grid), len(self.col_grid)):
            raise ValueError(
                f"kernel shape {values.shape} does not match grids "
                f"({len(self.row_grid)}, {len(self.col_grid)})"
            )
        if self.label is KernelLabel.TRANSVERSE and self.order_m is None:
            raise ValueError("transverse components need an azimuthal order")

    def weighted(self) -> np.ndarray:
        return (
            np.sqrt(self.row_grid.weights)[:, None]
            * self.values
            * np.sqrt(self.col_grid.weights)[None, :]
        )

    def norm(self) -> float:
        return float(np.linalg.norm(self.weighted()))

    def normalized(self) -> "KernelMatrix":
        norm = self.norm()
        if not np.isfinite(norm) or norm <= np.finfo(float).tiny:
            raise NormalizationError(f"No signal on grid: kernel {self.label.value} has zero norm")
        return self.with_values(self.values / norm)

    def with_values(self, values: np.ndarray) -> "KernelMatrix":
        return replace(self, values=values)

    def scaled(self, row_factor: np.ndarray, col_factor: np.ndarray) -> "KernelMatrix":
        return self.with_values(row_factor[:, None] * self.values * col_factor[None, :])

    def asymmetry(self) -> float:
        scale = float(np.max(np.abs(self.values)))
        if scale == 0:
            return 0.0
        return float(np.max(np.abs(self.values - self.values.T))) / scale


def sinc_phase(argument):
    """exp(-i x) sinc(x), finite at x = 0."""
    return np.exp(-1j * argument) * np.sinc(argument / np.pi)


def pump_spatial_spectrum(q, pump: PumpConfig):
    q = np.asarray(q, dtype=float)
    return pump.w_p / math.sqrt(2 * math.pi) * np.exp(-(pump.w_p**2) * q**2 / 4)


def pump_spectrum(omega, pump: PumpConfig):
    omega = np.asarray(omega, dtype=float)
    tau = pump.duration
    return math.sqrt(tau / math.sqrt(2 * math.pi)) * np.exp(-(tau**2) * (omega - pump.omega0) ** 2 / 4)


@dataclass(frozen=True)
class TransverseModel:
    k_p: float
    k_s: float
    k_i: float
    kappa_s0: float
    kappa_i0: float
    length: float
    pump: PumpConfig

    @classmethod
    def from_setup(cls, geometry: Geometry, crystal: CrystalConfig, pump: PumpConfig) -> "TransverseModel":
        return cls(
            k_p=geometry.k_p0,
            k_s=geometry.k_s0,
            k_i=geometry.k_i0,
            kappa_s0=geometry.kappa_s0,
            kappa_i0=geometry.kappa_i0,
            length=crystal.length,
            pump=pump,
        )

    def amplitude(self, ks, ki, dphi):
        """Paraxial transverse amplitude at radial wave numbers ks, ki and azimuth difference dphi.

        dphi is measured from the anti-parallel configuration, so dphi = 0 is the
        phase-matched pair on opposite sides of the ring.
        """
        ks = np.asarray(ks, dtype=float)
        ki = np.asarray(ki, dtype=float)
        p2 = (ks - ki) ** 2 + 4.0 * (ks * ki) * np.sin(0.5 * np.asarray(dphi)) ** 2
        ring = (ks - self.kappa_s0) * (ks + self.kappa_s0) / (2 * self.k_s) + (
            (ki - self.kappa_i0) * (ki + self.kappa_i0) / (2 * self.k_i)
        )
        argument = (p2 / (2 * self.k_p) - ring) * self.length / 2
        return pump_spatial_spectrum(np.sqrt(p2), self.pump) * sinc_phase(argument)


def bracket_support(
    profile: Callable[[np.ndarray], np.ndarray],
    center: float,
    halfwidth: float,
    threshold: float,
    lower_bound: float = -math.inf,
    upper_bound: float = math.inf,
    max_doublings: int = 40,
    clip_label: str | None = None,
) -> tuple[float, float]:
    """Widen a scan around center until the outer 5% on each side drops below threshold * peak.

    A side that reaches its bound stops widening. With clip_label set, stopping
    there while still above threshold warns that the support is clipped.
    """
    edge = SCAN_POINTS // 20
    for _ in range(max_doublings):
        start = max(center - halfwidth, lower_bound)
        stop = min(center + halfwidth, upper_bound)
        axis = np.linspace(start, stop, SCAN_POINTS)
        values = profile(axis)
        peak = float(np.max(values))
        if not np.isfinite(peak) or peak <= 0:
            raise NormalizationError("No signal on grid: support scan found no intensity")

        level = threshold * peak
        left_clear = np.max(values[:edge]) < level
        right_clear = np.max(values[-edge:]) < level
        left_done = left_clear or start == lower_bound
        right_done = right_clear or stop == upper_bound
        if left_done and right_done:
            if clip_label and not (left_clear and right_clear):
                warnings.warn(
                    f"{clip_label} support clipped at the scan bound "
                    f"[{start:.6g}, {stop:.6g}]; intensity above {threshold:g} of peak lies beyond it",
                    stacklevel=2,
                )
            above = np.nonzero(values >= level)[0]
            step = axis[1] - axis[0]
            return max(axis[above[0]] - step, start), min(axis[above[-1]] + step, stop)
        halfwidth *= 2.0
    raise GridTooNarrowError("Support bracketing did not converge; kernel tails never fall below threshold")


def resolve_points(
    base: int,
    span: float,
    feature_width: float,
    points_per_width: float,
    cap: int,
    grid_scale: float,
    label: str,
) -> int:
    target = math.ceil(points_per_width * (math.pi / 2) * span / feature_width)
    count = max(base, target)
    limit = max(cap, base)
    if count > limit:
        warnings.warn(
            f"{label} grid capped at {limit} points ({target} wanted for "
            f"{points_per_width:g} points per feature width)",
            stacklevel=2,
        )
        count = limit
    return max(int(round(count * grid_scale)), 4)


def radial_grid(model: TransverseModel, numerics: NumericsConfig) -> Grid:
    width = 4.0 / model.pump.w_p
    offsets = np.linspace(-2 * width, 2 * width, PUMP_OFFSETS)

    def profile(ks: np.ndarray) -> np.ndarray:
        ki = np.abs(ks[:, None] - offsets[None, :])
        return np.sum(np.abs(model.amplitude(ks[:, None], ki, 0.0)) ** 2, axis=1)

    lo, hi = bracket_support(
        profile,
        model.kappa_s0,
        2 * width,
        numerics.support_threshold,
        lower_bound=0.0,
    )
    lo = max(lo - width, 0.0)
    hi = hi + width
    feature = width
    if model.kappa_s0 > 0:
        # first-zero width of the ring sinc in k_s + k_i
        feature = min(width, 4 * math.pi * model.k_s / (model.kappa_s0 * model.length))
    n = resolve_points(
        numerics.radial_points,
        hi - lo,
        feature,
        numerics.points_per_width,
        numerics.max_radial_points,
        numerics.grid_scale,
        "radial",
    )
    return gauss_legendre_grid(GridKind.RADIAL, lo, hi, n, center=model.kappa_s0)


def azimuthal_rule(
    model: TransverseModel,
    grid_s: Grid,
    grid_i: Grid,
    n_points: int,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Folded trapezoid rule on [0, window] for integrands even in the azimuth difference.

    Returns angles, weights and the window. When the pump factor never becomes
    negligible below pi the rule is the periodic rule over the full circle.
    """
    k_min = math.sqrt(grid_s.points[0] * grid_i.points[0])
    ratio = math.sqrt(AZIMUTHAL_TAIL) / (model.pump.w_p * k_min)
    window = math.pi if ratio >= 1.0 else 2 * math.asin(ratio)

    half = max(n_points // 2, 1)
    step = window / half
    angles = step * np.arange(half + 1)
    weights = np.full(half + 1, 2 * step)
    weights[0] = weights[-1] = step
    return angles, weights, window


def _sample_transverse(
    model: TransverseModel,
    grid_s: Grid,
    grid_i: Grid,
    angles: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, bool]:
    ks = grid_s.points[:, None]
    ki = grid_i.points[None, :]
    jacobian = np.sqrt(ks * ki)
    samples = np.empty((len(grid_s) * len(grid_i), len(angles)), dtype=complex)
    for column, angle in enumerate(angles):
        samples[:, column] = (jacobian * model.amplitude(ks, ki, angle)).ravel()

    scale = float(np.max(jacobian)) * model.pump.w_p / math.sqrt(2 * math.pi)
    negligible = float(np.max(np.abs(samples))) < NEGLIGIBLE_AMPLITUDE * scale
    if negligible:
        warnings.warn(
            "Radial grids do not overlap the phase-matching ring; transverse kernel has negligible norm",
            stacklevel=3,
        )
    return np.ascontiguousarray(samples.real), np.ascontiguousarray(samples.imag), negligible


def _fourier_block(
    real: np.ndarray,
    imag: np.ndarray,
    angles: np.ndarray,
    weights: np.ndarray,
    orders: np.ndarray,
) -> np.ndarray:
    basis = weights[:, None] * np.cos(np.outer(angles, orders)) / (2 * math.pi)
    return real @ basis + 1j * (imag @ basis)


def iter_transverse_components(
    model: TransverseModel,
    grid_s: Grid,
    grid_i: Grid,
    numerics: NumericsConfig,
) -> Iterator[KernelMatrix]:
    """Yield T_m for m = 0, 1, ... until the weighted norm drops below the cutoff."""
    angles, weights, _ = azimuthal_rule(model, grid_s, grid_i, numerics.azimuthal_points)
    real, imag, negligible = _sample_transverse(model, grid_s, grid_i, angles)
    shape = (len(grid_s), len(grid_i))

    reference = None
    for start in range(0, numerics.m_max + 1, ORDER_BLOCK):
        orders = np.arange(start, min(start + ORDER_BLOCK, numerics.m_max + 1))
        block = _fourier_block(real, imag, angles, weights, orders)
        for column, m in enumerate(orders):
            kernel = KernelMatrix(
                values=block[:, column].reshape(shape),
                row_grid=grid_s,
                col_grid=grid_i,
                label=KernelLabel.TRANSVERSE,
                order_m=int(m),
                negligible=negligible,
            )
            norm = kernel.norm()
            if reference is None:
                reference = norm
            elif norm < numerics.m_norm_cutoff * reference:
                return
            yield kernel

    warnings.warn(
        f"Azimuthal orders truncated at m_max = {numerics.m_max} before the norm cutoff",
        stacklevel=2,
    )


def build_transverse_component(
    m: int,
    geometry: Geometry,
    crystal: CrystalConfig,
    pump: PumpConfig,
    radial_grid_s: Grid,
    radial_grid_i: Grid,
    numerics: NumericsConfig | None = None,
) -> KernelMatrix:
    numerics = numerics or NumericsConfig()
    if abs(m) > numerics.m_max:
        raise ValueError(f"|m| = {abs(m)} exceeds m_max = {numerics.m_max}")

    model = TransverseModel.from_setup(geometry, crystal, pump)
    angles, weights, _ = azimuthal_rule(model, radial_grid_s, radial_grid_i, numerics.azimuthal_points)
    real, imag, negligible = _sample_transverse(model, radial_grid_s, radial_grid_i, angles)
    # T_{-m} = T_m since the amplitude is even in the azimuth difference
    block = _fourier_block(real, imag, angles, weights, np.array([abs(m)]))
    return KernelMatrix(
        values=block[:, 0].reshape(len(radial_grid_s), len(radial_grid_i)),
        row_grid=radial_grid_s,
        col_grid=radial_grid_i,
        label=KernelLabel.TRANSVERSE,
        order_m=int(m),
        negligible=negligible,
    )


def build_radial_section(model: TransverseModel, grid_s: Grid, grid_i: Grid) -> KernelMatrix:
    ks = grid_s.points[:, None]
    ki = grid_i.points[None, :]
    return KernelMatrix(
        values=np.sqrt(ks * ki) * model.amplitude(ks, ki, 0.0),
        row_grid=grid_s,
        col_grid=grid_i,
        label=KernelLabel.RADIAL_SECTION,
    )


def azimuthal_section_grids(model: TransverseModel, numerics: NumericsConfig) -> tuple[Grid, Grid]:
    """Detuning lattices around the ring: rows span [-W, W], columns [-2W, 2W] at equal spacing."""
    half = max(numerics.azimuthal_section_points // 2, 2)
    ratio = math.sqrt(SECTION_TAIL) / (model.pump.w_p * math.sqrt(model.kappa_s0 * model.kappa_i0))
    if ratio >= math.sin(math.pi / 4):
        grid = periodic_grid(GridKind.AZIMUTHAL, 2 * half)
        return grid, grid

    window = 2 * math.asin(ratio)
    rows = trapezoid_grid(GridKind.AZIMUTHAL, -window, window, 2 * half + 1, center=0.0)
    cols = trapezoid_grid(GridKind.AZIMUTHAL, -2 * window, 2 * window, 4 * half + 1, center=0.0)
    return rows, cols


def build_azimuthal_section(model: TransverseModel, rows: Grid, cols: Grid) -> KernelMatrix:
    spacing = rows.points[1] - rows.points[0]
    # snap differences onto the lattice so equal offsets give bit-equal entries
    steps = np.rint((rows.points[:, None] - cols.points[None, :]) / spacing)
    dphi = steps * spacing
    values = math.sqrt(model.kappa_s0 * model.kappa_i0) * model.amplitude(
        model.kappa_s0, model.kappa_i0, dphi
    )
    return KernelMatrix(
        values=values,
        row_grid=rows,
        col_grid=cols,
        label=KernelLabel.AZIMUTHAL_SECTION,
    )


def spectral_amplitude(ws, wi, geometry: Geometry, crystal: CrystalConfig, pump: PumpConfig):
    ws = np.asarray(ws, dtype=float)
    wi = np.asarray(wi, dtype=float)
    k_p = wavenumber_extraordinary(ws + wi, crystal.cut_angle, crystal)
    k_s = wavenumber_ordinary(ws, crystal)
    k_i = wavenumber_ordinary(wi, crystal)
    mismatch = k_p - (
        k_s * math.cos(geometry.theta_s_int) + k_i * math.cos(geometry.theta_i_int)
    )
    prefactor = ws * wi / np.sqrt(k_s * k_i)
    return prefactor * pump_spectrum(ws + wi, pump) * sinc_phase(mismatch * crystal.length / 2)


def ridge_mismatch_slope(geometry: Geometry, crystal: CrystalConfig) -> float:
    """d(delta k)/d(omega) with pump and signal detuned together at fixed idler, in s/m."""
    step = 1e-4 * geometry.omega_s0

    def mismatch(shift: float) -> float:
        k_p = wavenumber_extraordinary(geometry.omega_p0 + shift, crystal.cut_angle, crystal)
        k_s = wavenumber_ordinary(geometry.omega_s0 + shift, crystal)
        return float(k_p - k_s * math.cos(geometry.theta_s_int))

    return (mismatch(step) - mismatch(-step)) / (2 * step)


def window_frequencies(crystal: CrystalConfig) -> tuple[float, float]:
    """Angular frequencies bounding the Sellmeier validity window, in ascending order."""
    lo, hi = crystal.sellmeier.window_meters
    return 2 * math.pi * c / hi, 2 * math.pi * c / lo


@dataclass(frozen=True)
class SpectralSupport:
    center: float
    halfwidth: float
    feature: float
    # half-width in omega_s + omega_i - omega_p0 beyond which the pump amplitude is dropped
    ridge_reach: float
    wanted: int
    ridge: bool


def spectral_support(
    geometry: Geometry,
    crystal: CrystalConfig,
    pump: PumpConfig,
    numerics: NumericsConfig,
) -> SpectralSupport:
    """Bracket the spectral kernel around omega_s0 and pick its storage.

    Signal, idler and their sum stay inside the Sellmeier window. Kernels that
    need more than max_spectral_points dense points to resolve their narrowest
    feature are stored along the pump ridge instead.
    """
    center = geometry.omega_s0
    width = 4.0 / pump.duration
    offsets = np.linspace(-2 * width, 2 * width, PUMP_OFFSETS)
    omega_min, omega_max = window_frequencies(crystal)
    limit = (1 - WINDOW_MARGIN) * min(
        center - omega_min,
        omega_max - center,
        0.5 * omega_max - center,
    )
    lower = max(center - limit, geometry.omega_p0 + 2 * width - omega_max)
    upper = min(center + limit, geometry.omega_p0 - 2 * width - omega_min)
    if not lower < center < upper:
        raise DomainError(
            f"Spectral grid around {center:.6g} rad/s does not fit the {crystal.sellmeier.name} validity window"
        )

    def profile(ws: np.ndarray) -> np.ndarray:
        wi = geometry.omega_p0 - ws[:, None] + offsets[None, :]
        amplitude = spectral_amplitude(ws[:, None], wi, geometry, crystal, pump)
        return np.sum(np.abs(amplitude) ** 2, axis=1)

    lo, hi = bracket_support(
        profile,
        center,
        2 * width,
        numerics.support_threshold,
        lower_bound=lower,
        upper_bound=upper,
        clip_label="spectral",
    )
    halfwidth = min(max(center - lo, hi - center) + width, limit)
    slope = abs(ridge_mismatch_slope(geometry, crystal))
    feature = min(width, 4 * math.pi / (slope * crystal.length)) if slope > 0 else width
    wanted = max(
        numerics.spectral_points,
        math.ceil(numerics.points_per_width * (math.pi / 2) * 2 * halfwidth / feature),
    )
    reach = 2 * math.sqrt(SECTION_TAIL) / pump.duration
    ridge = wanted > max(numerics.max_spectral_points, numerics.spectral_points) and reach < halfwidth
    return SpectralSupport(center, halfwidth, feature, reach, wanted, ridge)


def spectral_grid(
    geometry: Geometry,
    crystal: CrystalConfig,
    pump: PumpConfig,
    numerics: NumericsConfig,
    support: SpectralSupport | None = None,
) -> Grid:
    """Gauss-Legendre grid for dense kernels, uniform grid symmetric about omega_s0 for ridge storage."""
    support = support or spectral_support(geometry, crystal, pump, numerics)
    start, stop = support.center - support.halfwidth, support.center + support.halfwidth
    if support.ridge:
        n = resolve_points(
            numerics.spectral_points,
            stop - start,
            support.feature,
            numerics.ridge_points_per_width,
            numerics.max_ridge_points,
            numerics.grid_scale,
            "spectral ridge",
        )
        return trapezoid_grid(GridKind.SPECTRAL, start, stop, n, center=support.center)

    n = resolve_points(
        numerics.spectral_points,
        stop - start,
        support.feature,
        numerics.points_per_width,
        numerics.max_spectral_points,
        numerics.grid_scale,
        "spectral",
    )
    return gauss_legendre_grid(GridKind.SPECTRAL, start, stop, n, center=support.center)


def build_spectral_kernel(
    geometry: Geometry,
    crystal: CrystalConfig,
    pump: PumpConfig,
    spectral_grid_s: Grid,
    spectral_grid_i: Grid,
) -> KernelMatrix:
    values = spectral_amplitude(
        spectral_grid_s.points[:, None],
        spectral_grid_i.points[None, :],
        geometry,
        crystal,
        pump,
    )
    return KernelMatrix(
        values=values,
        row_grid=spectral_grid_s,
        col_grid=spectral_grid_i,
        label=KernelLabel.SPECTRAL,
    )


@dataclass(frozen=True, eq=False)
class RidgeKernel:
    """F_L kept only along the pump ridge of a uniform grid.

    band[d, j] is the amplitude at signal node j and idler node columns[d, j];
    columns is -1 where that idler node falls off the grid. Signal and idler
    share the grid.
    """

    band: np.ndarray
    columns: np.ndarray
    grid: Grid
    label: KernelLabel = KernelLabel.SPECTRAL
    order_m: int | None = None

    def __post_init__(self):
        band = np.array(self.band, dtype=complex)
        columns = np.array(self.columns, dtype=np.int64)
        band.flags.writeable = False
        columns.flags.writeable = False
        object.__setattr__(self, "band", band)
        object.__setattr__(self, "columns", columns)
        if band.shape != columns.shape or band.ndim != 2 or band.shape[1] != len(self.grid):
            raise ValueError(
                f"ridge band {band.shape} and columns {columns.shape} do not match a grid of {len(self.grid)}"
            )
        if np.any(columns >= len(self.grid)) or np.any(band[columns < 0] != 0):
            raise ValueError("ridge columns must index the grid, with zero amplitude where they do not")

    @property
    def row_grid(self) -> Grid:
        return self.grid

    @property
    def col_grid(self) -> Grid:
        return self.grid

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.grid), len(self.grid)

    def _entries(self, values: np.ndarray) -> sparse.csr_array:
        inside = self.columns >= 0
        rows = np.broadcast_to(np.arange(len(self.grid))[None, :], self.columns.shape)
        return sparse.csr_array((values[inside], (rows[inside], self.columns[inside])), shape=self.shape)

    def to_sparse(self) -> sparse.csr_array:
        return self._entries(self.band)

    def weighted(self) -> sparse.csr_array:
        scale = np.sqrt(self.grid.weights)
        col_scale = np.where(self.columns >= 0, scale[np.maximum(self.columns, 0)], 0.0)
        return self._entries(scale[None, :] * self.band * col_scale)

    def norm(self) -> float:
        weights = self.grid.weights
        col_weights = np.where(self.columns >= 0, weights[np.maximum(self.columns, 0)], 0.0)
        return math.sqrt(math.fsum((weights[None, :] * np.abs(self.band) ** 2 * col_weights).ravel()))

    def normalized(self) -> "RidgeKernel":
        norm = self.norm()
        if not np.isfinite(norm) or norm <= np.finfo(float).tiny:
            raise NormalizationError(f"No signal on grid: kernel {self.label.value} has zero norm")
        return self.with_values(self.band / norm)

    def with_values(self, band: np.ndarray) -> "RidgeKernel":
        return replace(self, band=band)

    def scaled(self, row_factor: np.ndarray, col_factor: np.ndarray) -> "RidgeKernel":
        cols = np.where(self.columns >= 0, col_factor[np.maximum(self.columns, 0)], 0.0)
        return self.with_values(row_factor[None, :] * self.band * cols)


def build_ridge_kernel(
    geometry: Geometry,
    crystal: CrystalConfig,
    pump: PumpConfig,
    grid: Grid,
    reach: float,
) -> RidgeKernel:
    """Sample F_L where |omega_s + omega_i - omega_p0| <= reach on a uniform grid."""
    n = len(grid)
    step = (grid.interval[1] - grid.interval[0]) / (n - 1)
    steps = np.diff(grid.points)
    if not np.allclose(steps, step, rtol=1e-8, atol=0.0):
        raise ValueError("ridge storage needs a uniform grid")

    half = math.ceil(reach / step)
    # idler node n - 1 - j + shift pairs with signal node j on the ridge
    shift = int(round(float(geometry.omega_p0 - grid.points[0] - grid.points[-1]) / step))
    offsets = np.arange(-half, half + 1)
    columns = (n - 1 + shift) - np.arange(n)[None, :] + offsets[:, None]
    inside = (columns >= 0) & (columns < n)
    rows = np.broadcast_to(np.arange(n)[None, :], columns.shape)

    band = np.zeros(columns.shape, dtype=complex)
    band[inside] = spectral_amplitude(
        grid.points[rows[inside]],
        grid.points[columns[inside]],
        geometry,
        crystal,
        pump,
    )
    return RidgeKernel(band=band, columns=np.where(inside, columns, -1), grid=grid)
