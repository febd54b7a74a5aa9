from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Any

import numpy as np
from scipy.constants import c
from scipy.optimize import brentq

from twinbeam.errors import DomainError, PhaseMatchingError, SellmeierError


DERIVATIVE_STEP = 1e-4

_UNIT_SCALE = {"um": 1e6, "m": 1.0}


class Interaction(str, Enum):
    TYPE_I_EOO = "type-I-eoo"


class SellmeierForm(str, Enum):
    # n^2 = A + B/(x^2 - C) - D x^2
    EIMERL = "eimerl"
    # n^2 = 1 + sum B_i x^2/(x^2 - C_i), coefficients given as B1, C1, B2, C2, ...
    SELLMEIER = "sellmeier"


@dataclass(frozen=True)
class SellmeierSet:
    name: str
    form: SellmeierForm
    ordinary: tuple[float, ...]
    extraordinary: tuple[float, ...]
    window: tuple[float, float]
    wavelength_unit: str = "um"
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "form", SellmeierForm(self.form))
        object.__setattr__(self, "ordinary", tuple(float(v) for v in self.ordinary))
        object.__setattr__(self, "extraordinary", tuple(float(v) for v in self.extraordinary))
        object.__setattr__(self, "window", tuple(float(v) for v in self.window))

        if self.wavelength_unit not in _UNIT_SCALE:
            raise ValueError(
                f"wavelength_unit must be one of {sorted(_UNIT_SCALE)} (got {self.wavelength_unit!r})"
            )
        for label, coefficients in (("ordinary", self.ordinary), ("extraordinary", self.extraordinary)):
            if self.form is SellmeierForm.EIMERL and len(coefficients) != 4:
                raise SellmeierError(f"{label} coefficients of an eimerl-form set need 4 values")
            if self.form is SellmeierForm.SELLMEIER and (not coefficients or len(coefficients) % 2):
                raise SellmeierError(f"{label} coefficients of a sellmeier-form set come in (B, C) pairs")
        if len(self.window) != 2 or not 0 < self.window[0] < self.window[1]:
            raise SellmeierError(f"window must be an increasing positive pair (got {self.window})")

    @property
    def window_meters(self) -> tuple[float, float]:
        scale = _UNIT_SCALE[self.wavelength_unit]
        return self.window[0] / scale, self.window[1] / scale

    def _scaled(self, wavelength) -> np.ndarray:
        x = np.asarray(wavelength, dtype=float) * _UNIT_SCALE[self.wavelength_unit]
        lo, hi = self.window
        if not np.all(np.isfinite(x)) or np.any(x < lo) or np.any(x > hi):
            lo_m, hi_m = self.window_meters
            raise DomainError(
                f"Wavelength outside the {self.name} validity window "
                f"[{lo_m * 1e6:.4g}, {hi_m * 1e6:.4g}] um"
            )
        return x

    def refractive_index(self, wavelength, coefficients: tuple[float, ...]):
        x2 = self._scaled(wavelength) ** 2
        if self.form is SellmeierForm.EIMERL:
            a, b, pole, d = coefficients
            n2 = a + b / (x2 - pole) - d * x2
        else:
            n2 = 1.0
            for b, pole in zip(coefficients[::2], coefficients[1::2]):
                n2 = n2 + b * x2 / (x2 - pole)
        return np.sqrt(n2)

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "form": self.form.value,
            "ordinary": list(self.ordinary),
            "extraordinary": list(self.extraordinary),
            "window": list(self.window),
            "wavelength_unit": self.wavelength_unit,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SellmeierSet":
        return cls(
            name=data.get("name", "custom"),
            form=data.get("form", "eimerl"),
            ordinary=tuple(data["ordinary"]),
            extraordinary=tuple(data["extraordinary"]),
            window=tuple(data["window"]),
            wavelength_unit=data.get("wavelength_unit", "um"),
            source=data.get("source", ""),
        )


SELLMEIER_SETS: dict[str, SellmeierSet] = {
    "bbo-eimerl": SellmeierSet(
        name="bbo-eimerl",
        form=SellmeierForm.EIMERL,
        ordinary=(2.7405, 0.0184, 0.0179, 0.0155),
        extraordinary=(2.3730, 0.0128, 0.0156, 0.0044),
        window=(0.22, 1.06),
        source="D. Eimerl et al., J. Appl. Phys. 62, 1968 (1987)",
    ),
    "bbo-kato": SellmeierSet(
        name="bbo-kato",
        form=SellmeierForm.EIMERL,
        ordinary=(2.7359, 0.01878, 0.01822, 0.01354),
        extraordinary=(2.3753, 0.01224, 0.01667, 0.01516),
        window=(0.22, 1.06),
        source="K. Kato, IEEE J. Quantum Electron. 22, 1013 (1986)",
    ),
    "bbo-tamosauskas": SellmeierSet(
        name="bbo-tamosauskas",
        form=SellmeierForm.SELLMEIER,
        ordinary=(0.90291, 0.003926, 0.83155, 0.018786, 0.76536, 60.01),
        extraordinary=(1.151075, 0.007142, 0.21803, 0.02259, 0.656, 263.0),
        window=(0.188, 5.2),
        source="G. Tamosauskas et al., Opt. Mater. Express 8, 1410 (2018)",
    ),
}


@dataclass(frozen=True)
class CrystalConfig:
    length: float
    cut_angle: float
    sellmeier: SellmeierSet
    interaction: Interaction = Interaction.TYPE_I_EOO
    name: str = "BBO"

    def __post_init__(self):
        object.__setattr__(self, "interaction", Interaction(self.interaction))
        if not self.length > 0:
            raise ValueError(f"crystal length must be positive (got {self.length})")
        if not 0 < self.cut_angle < math.pi / 2:
            raise ValueError(f"cut angle must lie in (0, pi/2) rad (got {self.cut_angle})")

        lo, hi = self.sellmeier.window_meters
        samples = np.linspace(lo * (1 + 1e-9), hi * (1 - 1e-9), 65)
        for coefficients in (self.sellmeier.ordinary, self.sellmeier.extraordinary):
            n = self.sellmeier.refractive_index(samples, coefficients)
            if not np.all(np.isfinite(n)) or np.any(n <= 1.0):
                raise SellmeierError(f"Sellmeier set {self.sellmeier.name} gives n <= 1 inside its window")

    @classmethod
    def from_degrees(
        cls,
        length: float,
        cut_angle_deg: float,
        sellmeier: str | SellmeierSet = "bbo-eimerl",
        name: str = "BBO",
    ) -> "CrystalConfig":
        if isinstance(sellmeier, str):
            sellmeier = SELLMEIER_SETS[sellmeier]
        return cls(
            length=length,
            cut_angle=math.radians(cut_angle_deg),
            sellmeier=sellmeier,
            name=name,
        )


@dataclass(frozen=True)
class Geometry:
    lambda_p0: float
    lambda_s0: float
    lambda_i0: float
    theta_s_int: float
    theta_i_int: float
    theta_s_ext: float
    theta_i_ext: float
    k_p0: float
    k_s0: float
    k_i0: float
    n_p: float
    dn_p_dtheta: float

    @property
    def omega_p0(self) -> float:
        return 2 * math.pi * c / self.lambda_p0

    @property
    def omega_s0(self) -> float:
        return 2 * math.pi * c / self.lambda_s0

    @property
    def omega_i0(self) -> float:
        return 2 * math.pi * c / self.lambda_i0

    @property
    def kappa_s0(self) -> float:
        """Radius of the signal emission ring in the transverse wave-vector plane."""
        return self.k_s0 * math.sin(self.theta_s_int)

    @property
    def kappa_i0(self) -> float:
        return self.k_i0 * math.sin(self.theta_i_int)

    @property
    def longitudinal_mismatch(self) -> float:
        return (
            self.k_p0
            - self.k_s0 * math.cos(self.theta_s_int)
            - self.k_i0 * math.cos(self.theta_i_int)
        )


def index_ordinary(wavelength, crystal: CrystalConfig):
    return crystal.sellmeier.refractive_index(wavelength, crystal.sellmeier.ordinary)


def index_extraordinary(wavelength, theta: float, crystal: CrystalConfig):
    """Index of the extraordinary wave propagating at `theta` from the optic axis."""
    if not 0.0 <= theta <= math.pi / 2:
        raise DomainError(f"propagation angle must lie in [0, pi/2] rad (got {theta})")
    n_o = index_ordinary(wavelength, crystal)
    n_e = crystal.sellmeier.refractive_index(wavelength, crystal.sellmeier.extraordinary)
    inverse_square = np.cos(theta) ** 2 / n_o**2 + np.sin(theta) ** 2 / n_e**2
    return 1.0 / np.sqrt(inverse_square)


def wavenumber_ordinary(omega, crystal: CrystalConfig):
    omega = np.asarray(omega, dtype=float)
    return index_ordinary(2 * math.pi * c / omega, crystal) * omega / c


def wavenumber_extraordinary(omega, theta: float, crystal: CrystalConfig):
    omega = np.asarray(omega, dtype=float)
    return index_extraordinary(2 * math.pi * c / omega, theta, crystal) * omega / c


def pump_index_derivative(crystal: CrystalConfig, lambda_p0: float, step: float = DERIVATIVE_STEP) -> float:
    theta = crystal.cut_angle
    upper = float(index_extraordinary(lambda_p0, min(theta + step, math.pi / 2), crystal))
    lower = float(index_extraordinary(lambda_p0, max(theta - step, 0.0), crystal))
    return (upper - lower) / (min(theta + step, math.pi / 2) - max(theta - step, 0.0))


def solve_geometry(
    crystal: CrystalConfig,
    lambda_p0: float,
    lambda_s0: float | None = None,
    lambda_i0: float | None = None,
) -> Geometry:
    if not lambda_p0 > 0:
        raise ValueError(f"pump wavelength must be positive (got {lambda_p0})")
    degenerate = 2.0 * lambda_p0
    for label, value in (("signal", lambda_s0), ("idler", lambda_i0)):
        if value is not None and not math.isclose(value, degenerate, rel_tol=1e-12):
            raise ValueError(
                f"only degenerate operation is modeled: {label} wavelength must equal "
                f"2 x pump wavelength ({degenerate:.6g} m)"
            )

    n_p = float(index_extraordinary(lambda_p0, crystal.cut_angle, crystal))
    n_s = float(index_ordinary(degenerate, crystal))
    k_p = 2 * math.pi * n_p / lambda_p0
    k_s = 2 * math.pi * n_s / degenerate
    k_i = k_s

    def mismatch(theta: float) -> float:
        return k_p - k_s * math.cos(theta) - k_i * math.cos(theta)

    collinear = mismatch(0.0)
    if collinear > 0:
        raise PhaseMatchingError(
            f"Not phase-matchable: pump index {n_p:.6f} at cut angle "
            f"{math.degrees(crystal.cut_angle):.4g} deg exceeds signal index {n_s:.6f}"
        )
    if collinear == 0:
        theta_int = 0.0
    else:
        theta_int = brentq(mismatch, 0.0, math.pi / 2, xtol=1e-15, rtol=4 * np.finfo(float).eps)

    sin_ext = n_s * math.sin(theta_int)
    if sin_ext >= 1.0:
        raise PhaseMatchingError(
            f"Not phase-matchable: internal angle {math.degrees(theta_int):.4g} deg is "
            "totally internally reflected at the exit face"
        )
    theta_ext = math.asin(sin_ext)

    return Geometry(
        lambda_p0=lambda_p0,
        lambda_s0=degenerate,
        lambda_i0=degenerate,
        theta_s_int=theta_int,
        theta_i_int=theta_int,
        theta_s_ext=theta_ext,
        theta_i_ext=theta_ext,
        k_p0=k_p,
        k_s0=k_s,
        k_i0=k_i,
        n_p=n_p,
        dn_p_dtheta=pump_index_derivative(crystal, lambda_p0),
    )


@lru_cache(maxsize=None)
def anisotropy_constant() -> float:
    # root of sin(x)/x = 1/e, where the anisotropy-limited sinc falls to 1/e
    return brentq(lambda x: math.sin(x) / x - math.exp(-1.0), 1.0, 3.0, xtol=1e-15)


def anisotropy_radius_from_indices(
    n_p: float,
    dn_p_dtheta: float,
    length: float,
    x_e: float | None = None,
) -> float:
    x_e = anisotropy_constant() if x_e is None else x_e
    if not x_e > 0:
        raise ValueError(f"x_e must be positive (got {x_e})")
    return abs(dn_p_dtheta) * length / (n_p * x_e)


def anisotropy_radius(crystal: CrystalConfig, geometry: Geometry, x_e: float | None = None) -> float:
    return anisotropy_radius_from_indices(geometry.n_p, geometry.dn_p_dtheta, crystal.length, x_e)
