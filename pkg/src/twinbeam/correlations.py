from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence, Union

import numpy as np
from scipy import sparse

from twinbeam.errors import GridTooNarrowError, NormalizationError
from twinbeam.kernels import Grid, GridKind, KernelLabel, KernelMatrix, RidgeKernel
from twinbeam.schmidt import SchmidtDecomposition, order_multiplicity


class CorrelationKind(str, Enum):
    AUTO_AMPLITUDE = "auto_amplitude"
    CROSS_INTENSITY = "cross_intensity"


def _crossing(x0: float, y0: float, x1: float, y1: float, level: float) -> float:
    return x0 + (level - y0) * (x1 - x0) / (y1 - y0)


def fwhm(axis, values) -> float:
    """Full width at half maximum by linear interpolation of the half-max crossings."""
    x = np.asarray(axis, dtype=float)
    y = np.asarray(values, dtype=float)
    peak_index = int(np.argmax(y))
    peak = float(y[peak_index])
    if not np.isfinite(peak) or peak <= 0:
        raise NormalizationError("Profile has no positive maximum")

    half = 0.5 * peak
    left = np.nonzero(y[:peak_index] < half)[0]
    right = np.nonzero(y[peak_index + 1:] < half)[0]
    if len(left) == 0 or len(right) == 0:
        raise GridTooNarrowError(
            "Grid too narrow: profile does not fall to half maximum on both sides inside the grid"
        )

    i = int(left[-1])
    j = peak_index + 1 + int(right[0])
    return _crossing(x[j - 1], y[j - 1], x[j], y[j], half) - _crossing(x[i], y[i], x[i + 1], y[i + 1], half)


@dataclass(frozen=True, eq=False)
class Profile1D:
    axis: Grid
    values: np.ndarray
    fwhm: float
    peak_location: float

    @classmethod
    def from_values(cls, axis: Grid, values) -> "Profile1D":
        values = np.asarray(values, dtype=float)
        return cls(
            axis=axis,
            values=values,
            fwhm=fwhm(axis.points, values),
            peak_location=float(axis.points[int(np.argmax(values))]),
        )

    def integral(self) -> float:
        return math.fsum(self.axis.weights * self.values)

    def normalized(self, reference: float | None = None) -> "Profile1D":
        # integral of n dx / x0 equals one
        reference = self.axis.center if reference is None else reference
        scale = reference / self.integral()
        return Profile1D(self.axis, self.values * scale, self.fwhm, self.peak_location)


@dataclass(frozen=True, eq=False)
class Correlation2D:
    row_axis: Grid
    col_axis: Grid
    # dense array, or a sparse array for ridge-stored kernels
    values: Union[np.ndarray, sparse.csc_array]
    kind: CorrelationKind
    variable: GridKind

    def section(self, center: float, power: int = 1) -> np.ndarray:
        column = self.col_axis.nearest_index(center)
        if sparse.issparse(self.values):
            values = self.values[:, [column]].toarray().ravel()
        else:
            values = self.values[:, column]
        return np.abs(values) ** power

    def relative_section(self, center: float, power: int = 1) -> np.ndarray:
        section = self.section(center, power)
        return section / section[self.row_axis.nearest_index(center)]


def resum_components(components: Sequence[KernelMatrix]) -> KernelMatrix:
    """Rebuild the radial section at zero azimuth difference from azimuthal components."""
    if not components:
        raise ValueError("No azimuthal components to resum")
    values = sum(order_multiplicity(k.order_m) * k.values for k in components)
    first = components[0]
    return KernelMatrix(
        values=values,
        row_grid=first.row_grid,
        col_grid=first.col_grid,
        label=KernelLabel.RADIAL_SECTION,
    )


def _normalized_amplitude(kernel: Union[KernelMatrix, RidgeKernel]):
    normalized = kernel.normalized()
    if isinstance(normalized, RidgeKernel):
        return normalized.to_sparse()
    return normalized.values


def intensity_profile(kernel: Union[KernelMatrix, RidgeKernel], field: str = "signal") -> Profile1D:
    amplitude = _normalized_amplitude(kernel)
    values = abs(amplitude).power(2) if sparse.issparse(amplitude) else np.abs(amplitude) ** 2
    if field == "signal":
        return Profile1D.from_values(kernel.row_grid, values @ kernel.col_grid.weights)
    if field == "idler":
        return Profile1D.from_values(kernel.col_grid, values.T @ kernel.row_grid.weights)
    raise ValueError(f"field must be 'signal' or 'idler' (got {field!r})")


def intensity_radial(
    section: Union[KernelMatrix, Sequence[KernelMatrix]],
    field: str = "signal",
) -> Profile1D:
    if not isinstance(section, KernelMatrix):
        section = resum_components(section)
    if section.label is not KernelLabel.RADIAL_SECTION:
        raise ValueError(f"radial intensity needs a radial section (got {section.label.value})")
    return intensity_profile(section, field)


def intensity_spectrum(kernel: Union[KernelMatrix, RidgeKernel], field: str = "signal") -> Profile1D:
    if kernel.label is not KernelLabel.SPECTRAL:
        raise ValueError(f"spectral intensity needs the spectral kernel (got {kernel.label.value})")
    return intensity_profile(kernel, field)


def auto_correlation(kernel: Union[KernelMatrix, RidgeKernel]) -> Correlation2D:
    amplitude = _normalized_amplitude(kernel)
    weights = kernel.col_grid.weights[None, :]
    if sparse.issparse(amplitude):
        weighting = sparse.dia_array((weights, [0]), shape=amplitude.shape)
        values = (amplitude.conj() @ weighting @ amplitude.T).tocsc()
    else:
        values = (amplitude.conj() * weights) @ amplitude.T
    return Correlation2D(
        row_axis=kernel.row_grid,
        col_axis=kernel.row_grid,
        values=values,
        kind=CorrelationKind.AUTO_AMPLITUDE,
        variable=kernel.row_grid.kind,
    )


def auto_correlation_from_modes(decomposition: SchmidtDecomposition) -> np.ndarray:
    modes = decomposition.signal_modes
    weights = decomposition.probabilities[: modes.shape[1]]
    return (modes.conj() * weights[None, :]) @ modes.T


def cross_correlation(kernel: Union[KernelMatrix, RidgeKernel]) -> Correlation2D:
    amplitude = _normalized_amplitude(kernel)
    if sparse.issparse(amplitude):
        values = abs(amplitude).power(2).tocsc()
    else:
        values = np.abs(amplitude) ** 2
    return Correlation2D(
        row_axis=kernel.row_grid,
        col_axis=kernel.col_grid,
        values=values,
        kind=CorrelationKind.CROSS_INTENSITY,
        variable=kernel.row_grid.kind,
    )


def section_width(corr: Correlation2D, center: float, power: int = 1) -> float:
    return fwhm(corr.row_axis.points, corr.section(center, power))


def mode_ratio_KDelta(intensity: Union[Profile1D, float], auto_width: float) -> float:
    width = intensity.fwhm if isinstance(intensity, Profile1D) else float(intensity)
    if not (np.isfinite(auto_width) and auto_width > 0):
        raise ValueError(f"auto-correlation width must be positive (got {auto_width})")
    if not (np.isfinite(width) and width > 0):
        raise ValueError(f"intensity width must be positive (got {width})")
    return width / auto_width


def azimuthal_mode_ratio(auto_width: float) -> float:
    # the azimuthal intensity is flat over the full circle
    return mode_ratio_KDelta(2 * math.pi, auto_width)
