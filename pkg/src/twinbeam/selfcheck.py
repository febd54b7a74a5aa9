"""Analytic oracles the numerics must reproduce on any installation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from twinbeam.correlations import fwhm
from twinbeam.dispersion import anisotropy_radius_from_indices
from twinbeam.errors import TwinBeamError
from twinbeam.kernels import GridKind, KernelLabel, KernelMatrix, gauss_legendre_grid, trapezoid_grid
from twinbeam.schmidt import decompose, schmidt_number


# BBO at 349 nm, 36.3 deg cut, 8 mm: published indices and radius in meters
REFERENCE_N_P = 1.658
REFERENCE_DN_P_DTHETA = 0.123
REFERENCE_LENGTH = 8e-3
REFERENCE_W_P_A = 270e-6
REFERENCE_W_P_A_TOLERANCE = 2e-6


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    expected: str
    observed: str

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "expected": self.expected,
            "observed": self.observed,
        }


def geometric_ratio(a: float, b: float) -> float:
    """Schmidt ratio s of the kernel exp(-a (x^2 + y^2) - b x y)."""
    return (2 * a - math.sqrt(4 * a * a - b * b)) / abs(b)


def _gaussian_kernel(a: float, b: float, n: int = 96, half_span: float = 8.0) -> KernelMatrix:
    grid = gauss_legendre_grid(GridKind.SPECTRAL, -half_span, half_span, n, center=0.0)
    x = grid.points[:, None]
    y = grid.points[None, :]
    return KernelMatrix(
        values=np.exp(-a * (x**2 + y**2) - b * x * y),
        row_grid=grid,
        col_grid=grid,
        label=KernelLabel.SPECTRAL,
    )


def check_gaussian_spectrum() -> CheckResult:
    s = geometric_ratio(1.0, 1.0)
    decomposition = decompose(_gaussian_kernel(1.0, 1.0), with_modes=False)
    expected = (1 - s**2) * s ** (2 * np.arange(6))
    observed = decomposition.probabilities[:6]
    error = float(np.max(np.abs(observed - expected)))
    return CheckResult(
        name="Gaussian kernel Schmidt spectrum",
        passed=error < 1e-4,
        expected=f"lambda_n^2 = (1 - s^2) s^2n, s = {s:.6f}",
        observed=f"max deviation {error:.2e}, K = {decomposition.schmidt_number:.6f}",
    )


def check_separable() -> CheckResult:
    grid = gauss_legendre_grid(GridKind.SPECTRAL, -6.0, 6.0, 48, center=0.0)
    signal = np.exp(-grid.points**2 / 2)
    idler = (1 + 0.5 * grid.points) * np.exp(-(grid.points**2))
    kernel = KernelMatrix(np.outer(signal, idler), grid, grid, KernelLabel.SPECTRAL)
    K = decompose(kernel, with_modes=False).schmidt_number
    return CheckResult(
        name="Separable kernel has K = 1",
        passed=abs(K - 1.0) < 1e-6,
        expected="K = 1 +- 1e-6",
        observed=f"K = {K:.12f}",
    )


def check_gaussian_fwhm() -> CheckResult:
    sigma = 1.3
    axis = np.linspace(-10.0, 10.0, 4001)
    width = fwhm(axis, np.exp(-(axis**2) / (2 * sigma**2)))
    expected = 2 * math.sqrt(2 * math.log(2)) * sigma
    return CheckResult(
        name="FWHM of a Gaussian",
        passed=abs(width / expected - 1) < 2e-3,
        expected=f"{expected:.6f}",
        observed=f"{width:.6f}",
    )


def check_anisotropy_radius(x_e: Optional[float] = None) -> CheckResult:
    radius = anisotropy_radius_from_indices(REFERENCE_N_P, REFERENCE_DN_P_DTHETA, REFERENCE_LENGTH, x_e)
    return CheckResult(
        name="Anisotropy radius hand value",
        passed=abs(radius - REFERENCE_W_P_A) <= REFERENCE_W_P_A_TOLERANCE,
        expected=f"{REFERENCE_W_P_A * 1e6:.0f} +- {REFERENCE_W_P_A_TOLERANCE * 1e6:.0f} um",
        observed=f"{radius * 1e6:.2f} um",
    )


def check_gauss_legendre_exactness() -> CheckResult:
    n = 8
    grid = gauss_legendre_grid(GridKind.RADIAL, 0.0, 2.0, n)
    worst = 0.0
    for degree in range(2 * n):
        exact = 2.0 ** (degree + 1) / (degree + 1)
        approx = math.fsum(grid.weights * grid.points**degree)
        worst = max(worst, abs(approx - exact) / exact)
    return CheckResult(
        name="Gauss-Legendre exact on polynomials",
        passed=worst < 1e-12,
        expected=f"degree <= {2 * n - 1} exact to 1e-12",
        observed=f"max relative error {worst:.2e}",
    )


def check_trapezoid_weights() -> CheckResult:
    grid = trapezoid_grid(GridKind.AZIMUTHAL, -1.5, 2.5, 201)
    total = math.fsum(grid.weights)
    linear = math.fsum(grid.weights * (3 * grid.points + 1))
    error = max(abs(total - 4.0), abs(linear - 10.0) / 10.0)
    return CheckResult(
        name="Trapezoid weights",
        passed=error < 1e-12,
        expected="weights sum to the span and integrate linear functions exactly",
        observed=f"max error {error:.2e}",
    )


def check_geometric_schmidt_number() -> CheckResult:
    s = 0.5
    n = np.arange(200)
    coefficients = np.sqrt((1 - s**2) * s ** (2 * n))
    coefficients = coefficients / math.sqrt(math.fsum(coefficients**2))
    K = schmidt_number(coefficients)
    expected = (1 + s**2) / (1 - s**2)
    return CheckResult(
        name="Schmidt number of a geometric spectrum",
        passed=abs(K - expected) < 1e-10,
        expected=f"{expected:.12f}",
        observed=f"{K:.12f}",
    )


def _guarded(name: str, check: Callable[[], CheckResult]) -> CheckResult:
    try:
        return check()
    except (TwinBeamError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        return CheckResult(name=name, passed=False, expected="no error", observed=f"{type(e).__name__}: {e}")


def run_selfcheck(x_e: Optional[float] = None) -> list[CheckResult]:
    checks: list[tuple[str, Callable[[], CheckResult]]] = [
        ("Gaussian kernel Schmidt spectrum", check_gaussian_spectrum),
        ("Separable kernel has K = 1", check_separable),
        ("FWHM of a Gaussian", check_gaussian_fwhm),
        ("Anisotropy radius hand value", lambda: check_anisotropy_radius(x_e)),
        ("Gauss-Legendre exact on polynomials", check_gauss_legendre_exactness),
        ("Trapezoid weights", check_trapezoid_weights),
        ("Schmidt number of a geometric spectrum", check_geometric_schmidt_number),
    ]
    return [_guarded(name, check) for name, check in checks]
