import math

import pytest

from twinbeam.dispersion import (
    SELLMEIER_SETS,
    CrystalConfig,
    SellmeierSet,
    anisotropy_constant,
    anisotropy_radius,
    anisotropy_radius_from_indices,
    index_extraordinary,
    index_ordinary,
    solve_geometry,
)
from twinbeam.errors import DomainError, PhaseMatchingError


def make_crystal(
    cut_angle_deg: float = 36.3,
    length: float = 8e-3,
    sellmeier: str = "bbo-eimerl",
) -> CrystalConfig:
    return CrystalConfig.from_degrees(length, cut_angle_deg, sellmeier)


def test_ordinary_index_at_degenerate_wavelength():
    assert float(index_ordinary(698e-9, make_crystal())) == pytest.approx(1.6649789, abs=1e-6)


def test_pump_index_at_cut_angle():
    n_p = float(index_extraordinary(349e-9, math.radians(36.3), make_crystal()))
    assert n_p == pytest.approx(1.658961, abs=1e-5)


def test_extraordinary_index_limits():
    crystal = make_crystal()
    n_o = float(index_ordinary(349e-9, crystal))
    assert float(index_extraordinary(349e-9, 0.0, crystal)) == pytest.approx(n_o, rel=1e-14)
    assert float(index_extraordinary(349e-9, math.pi / 2, crystal)) < n_o


def test_geometry_at_reference_point():
    geometry = solve_geometry(make_crystal(), 349e-9)

    assert geometry.lambda_s0 == pytest.approx(698e-9)
    assert geometry.theta_s_int == pytest.approx(0.0850501, abs=1e-5)
    assert geometry.theta_s_int == geometry.theta_i_int
    assert math.degrees(geometry.theta_s_ext) == pytest.approx(8.131, abs=0.02)
    assert geometry.k_s0 == pytest.approx(1.49878e7, rel=1e-5)
    assert geometry.k_p0 == pytest.approx(2.98668e7, rel=1e-5)
    assert geometry.kappa_s0 == pytest.approx(1.2732e6, rel=1e-3)
    assert abs(geometry.dn_p_dtheta) == pytest.approx(0.126683, rel=1e-4)


def test_geometry_is_phase_matched():
    geometry = solve_geometry(make_crystal(), 349e-9)
    assert abs(geometry.longitudinal_mismatch) < 1e-6 * geometry.k_p0


def test_emission_angle_grows_with_cut_angle():
    angles = [solve_geometry(make_crystal(cut), 349e-9).theta_s_int for cut in (34.0, 36.3, 38.0)]
    assert angles[0] < angles[1] < angles[2]


@pytest.mark.parametrize("name", ["bbo-eimerl", "bbo-kato", "bbo-tamosauskas"])
def test_every_bundled_set_phase_matches(name):
    geometry = solve_geometry(make_crystal(sellmeier=name), 349e-9)
    assert 7.5 < math.degrees(geometry.theta_s_ext) < 8.5


def test_not_phase_matchable_below_collinear_cut():
    with pytest.raises(PhaseMatchingError, match="phase-matchable"):
        solve_geometry(make_crystal(20.0), 349e-9)


def test_wavelength_outside_window():
    with pytest.raises(DomainError, match="window"):
        index_ordinary(1.5e-6, make_crystal())


def test_only_degenerate_operation():
    with pytest.raises(ValueError, match="degenerate"):
        solve_geometry(make_crystal(), 349e-9, lambda_s0=700e-9)


def test_anisotropy_constant():
    x_e = anisotropy_constant()
    assert x_e == pytest.approx(2.19912, abs=1e-5)
    assert math.sin(x_e) / x_e == pytest.approx(math.exp(-1.0), abs=1e-12)


def test_anisotropy_radius_hand_value():
    radius = anisotropy_radius_from_indices(1.658, 0.123, 8e-3)
    assert radius == pytest.approx(270e-6, abs=2e-6)


def test_anisotropy_radius_from_eimerl_indices():
    crystal = make_crystal()
    radius = anisotropy_radius(crystal, solve_geometry(crystal, 349e-9))
    assert radius == pytest.approx(277.8e-6, abs=1e-6)


def test_anisotropy_radius_scales_with_length():
    short = anisotropy_radius_from_indices(1.658, 0.123, 4e-3)
    long = anisotropy_radius_from_indices(1.658, 0.123, 8e-3)
    assert long == pytest.approx(2 * short)


def test_anisotropy_radius_rejects_bad_constant():
    with pytest.raises(ValueError):
        anisotropy_radius_from_indices(1.658, 0.123, 8e-3, x_e=0.0)


def test_sellmeier_units_give_identical_indices():
    micron = SELLMEIER_SETS["bbo-eimerl"]

    def in_meters(coefficients):
        a, b, pole, d = coefficients
        return (a, b * 1e-12, pole * 1e-12, d * 1e12)

    meter = SellmeierSet(
        name="bbo-eimerl-m",
        form=micron.form,
        ordinary=in_meters(micron.ordinary),
        extraordinary=in_meters(micron.extraordinary),
        window=(0.22e-6, 1.06e-6),
        wavelength_unit="m",
    )

    for wavelength in (349e-9, 698e-9, 1.0e-6):
        assert float(meter.refractive_index(wavelength, meter.ordinary)) == pytest.approx(
            float(micron.refractive_index(wavelength, micron.ordinary)), rel=1e-12
        )
        assert float(meter.refractive_index(wavelength, meter.extraordinary)) == pytest.approx(
            float(micron.refractive_index(wavelength, micron.extraordinary)), rel=1e-12
        )


def test_sellmeier_round_trip_through_dict():
    original = SELLMEIER_SETS["bbo-tamosauskas"]
    assert SellmeierSet.from_dict(original.to_dict()) == original


def test_sellmeier_rejects_bad_coefficients():
    with pytest.raises(ValueError, match="4 values"):
        SellmeierSet("bad", "eimerl", (1.0, 2.0), (1.0, 2.0, 3.0, 4.0), (0.2, 1.0))
    with pytest.raises(ValueError, match="wavelength_unit"):
        SellmeierSet("bad", "eimerl", (2.7, 0.01, 0.01, 0.01), (2.3, 0.01, 0.01, 0.0), (0.2, 1.0), "nm")


def test_crystal_rejects_bad_values():
    with pytest.raises(ValueError, match="length"):
        make_crystal(length=0.0)
    with pytest.raises(ValueError, match="cut angle"):
        make_crystal(95.0)
