import math
import tempfile
from pathlib import Path

import numpy as np
import pytest
from scipy.constants import c

import twinbeam.sweeps as sweeps
from twinbeam.errors import ConfigError, NormalizationError
from twinbeam.kernels import GridKind, KernelLabel, KernelMatrix, RidgeKernel, gauss_legendre_grid, trapezoid_grid
from twinbeam.schmidt import decompose, mode_nodes
from twinbeam.store import SweepStore
from twinbeam.sweeps import (
    METRIC_UNITS,
    SweepParameter,
    SweepRecord,
    SweepSpec,
    analyze_point,
    apply_radial_filter,
    apply_spectral_filter,
    bundled_sweep_names,
    load_sweep_spec,
    run_sweep,
)
from twinbeam.utils.config import apply_overrides, load_config


OMEGA_0 = 2 * math.pi * c / 698e-9
GEOMETRY_OUTPUTS = ("w_p_a", "theta_ext")


def make_spectral_kernel(sigma_sum: float = 3e13, sigma_diff: float = 1.5e14, n: int = 200) -> KernelMatrix:
    grid = gauss_legendre_grid(GridKind.SPECTRAL, OMEGA_0 - 6e14, OMEGA_0 + 6e14, n, center=OMEGA_0)
    x = grid.points[:, None] - OMEGA_0
    y = grid.points[None, :] - OMEGA_0
    values = np.exp(-((x + y) / sigma_sum) ** 2 - ((x - y) / sigma_diff) ** 2)
    return KernelMatrix(values, grid, grid, KernelLabel.SPECTRAL)


def make_spec(base, values=(1.0e-9, 2.0e-9, 4.0e-9), outputs=GEOMETRY_OUTPUTS, parameter="pump_bandwidth_dlambda_p"):
    return SweepSpec(name="test", parameter=parameter, values=values, outputs=outputs, base=base)


def write_spec(directory: str, text: str) -> Path:
    path = Path(directory) / "spec.yaml"
    path.write_text(text)
    return path


def test_wide_spectral_filter_changes_nothing():
    kernel = make_spectral_kernel()
    filtered = apply_spectral_filter(kernel, 1e-3)
    assert np.max(np.abs(filtered.values - kernel.values)) < 1e-6 * np.max(np.abs(kernel.values))


def test_narrowing_spectral_filter_lowers_schmidt_number():
    kernel = make_spectral_kernel()
    unfiltered = decompose(kernel, with_modes=False).schmidt_number
    # (1 + s^2) / (1 - s^2) with s = 2/3 for this kernel
    assert unfiltered == pytest.approx(2.6, rel=1e-3)

    widths = [200e-9, 100e-9, 50e-9, 20e-9, 10e-9]
    values = [decompose(apply_spectral_filter(kernel, w), with_modes=False).schmidt_number for w in widths]
    assert all(b < a for a, b in zip(values, values[1:]))
    assert values[0] < unfiltered
    assert values[-1] < 1.3


def test_spectral_filter_passband_fwhm():
    kernel = make_spectral_kernel(n=2000)
    flat = kernel.with_values(np.ones(kernel.values.shape))
    fwhm_wavelength = 20e-9
    filtered = apply_spectral_filter(flat, fwhm_wavelength)
    transmission = np.abs(filtered.values[:, len(kernel.col_grid) // 2]) ** 2
    transmission = transmission / transmission.max()
    expected = 2 * math.pi * c * fwhm_wavelength / (2 * math.pi * c / OMEGA_0) ** 2

    points = kernel.row_grid.points
    inside = points[transmission >= 0.5]
    assert inside[-1] - inside[0] == pytest.approx(expected, rel=0.05)


def test_filters_check_kernel_kind():
    kernel = make_spectral_kernel(n=16)
    with pytest.raises(ValueError, match="radial kernel"):
        apply_radial_filter(kernel, 1e4)
    radial = KernelMatrix(kernel.values, kernel.row_grid, kernel.col_grid, KernelLabel.RADIAL_SECTION)
    with pytest.raises(ValueError, match="spectral kernel"):
        apply_spectral_filter(radial, 1e-9)
    with pytest.raises(ValueError, match="positive"):
        apply_spectral_filter(kernel, 0.0)


def test_radial_filter_centres_on_grid_center():
    grid = gauss_legendre_grid(GridKind.RADIAL, 1.2e6, 1.35e6, 64, center=1.27e6)
    kernel = KernelMatrix(np.ones((64, 64)), grid, grid, KernelLabel.RADIAL_SECTION)
    filtered = apply_radial_filter(kernel, 1e4).values
    peak = np.unravel_index(np.argmax(np.abs(filtered)), filtered.shape)
    assert grid.points[peak[0]] == pytest.approx(1.27e6, abs=2.5e3)
    assert np.max(np.abs(filtered)) <= 1.0


def test_parameter_keys_and_units():
    assert SweepParameter.PUMP_RADIUS.config_key == "pump.w_p"
    assert SweepParameter("filter_width").config_key == "analysis.filter_fwhm"
    assert SweepParameter.RADIAL_FILTER_WIDTH.unit == "rad/m"
    assert SweepParameter.PUMP_BANDWIDTH.unit == "m"


def test_metric_units_cover_every_metric():
    assert METRIC_UNITS["K_kphi"] == "1"
    assert METRIC_UNITS["Delta_A_phi"] == "rad"
    assert METRIC_UNITS["Delta_C_omega"] == "rad/s"
    assert METRIC_UNITS["w_p_a"] == "m"
    assert METRIC_UNITS["KDelta2_omega"] == "1"
    assert METRIC_UNITS["KDelta2_kphi"] == "1"


def test_geometry_only_point(coarse_config):
    result = analyze_point(coarse_config, GEOMETRY_OUTPUTS)
    assert set(result.metrics) == set(GEOMETRY_OUTPUTS)
    assert result.transverse is None
    assert result.spectral is None
    assert result.metrics["theta_ext"] == pytest.approx(8.131, abs=0.02)
    assert result.units == {"w_p_a": "m", "theta_ext": "deg"}


def test_analyze_point_rejects_unknown_metric(coarse_config):
    with pytest.raises(ValueError, match="Unknown metrics"):
        analyze_point(coarse_config, ("K_everything",))


def test_full_point_reports_every_metric(coarse_point):
    assert set(coarse_point.metrics) == set(METRIC_UNITS)
    assert all(math.isfinite(v) for v in coarse_point.metrics.values())
    assert coarse_point.metrics["KDelta_kphi"] == pytest.approx(
        coarse_point.metrics["KDelta_k"] * coarse_point.metrics["KDelta_phi"]
    )
    assert coarse_point.metrics["KDelta2_kphi"] == pytest.approx(
        coarse_point.metrics["KDelta2_k"] * coarse_point.metrics["KDelta2_phi"]
    )
    # the coarse spectral cap is far below what a 1 nm pump needs densely
    assert isinstance(coarse_point.spectral.kernel, RidgeKernel)


def test_spectral_filter_on_ridge_kernel_matches_dense():
    grid = trapezoid_grid(GridKind.SPECTRAL, OMEGA_0 - 6e14, OMEGA_0 + 6e14, 301, center=OMEGA_0)
    x = grid.points[:, None] - OMEGA_0
    columns = np.arange(300, -1, -1)[None, :] + np.arange(-3, 4)[:, None]
    inside = (columns >= 0) & (columns <= 300)
    detuning = x.T + grid.points[np.clip(columns, 0, 300)] - OMEGA_0
    band = np.where(inside, np.exp(-((detuning / 3e13) ** 2) - ((2 * x.T / 1.5e14) ** 2)), 0.0)
    ridge = RidgeKernel(band=band, columns=np.where(inside, columns, -1), grid=grid)
    dense = KernelMatrix(ridge.to_sparse().toarray(), grid, grid, KernelLabel.SPECTRAL)
    filtered = apply_spectral_filter(ridge, 5e-9).to_sparse().toarray()
    expected = apply_spectral_filter(dense, 5e-9).values
    assert np.max(np.abs(filtered - expected)) <= 1e-12 * np.max(np.abs(expected))


def test_spec_validation(coarse_config):
    with pytest.raises(ValueError, match="empty"):
        make_spec(coarse_config, values=())
    with pytest.raises(ValueError, match="increasing"):
        make_spec(coarse_config, values=(2e-9, 1e-9))
    with pytest.raises(ValueError, match="positive"):
        make_spec(coarse_config, values=(-1e-9, 1e-9))
    with pytest.raises(ValueError, match="Unknown metrics"):
        make_spec(coarse_config, outputs=("K_everything",))
    with pytest.raises(ValueError):
        make_spec(coarse_config, parameter="crystal_length")


def test_point_configs_override_parameter(coarse_config):
    spec = make_spec(coarse_config, values=(0.5e-3, 1e-3), parameter="pump_radius_w_p")
    configs = spec.point_configs()
    assert [cfg.pump.w_p for cfg in configs] == [0.5e-3, 1e-3]
    assert all(cfg.numerics.workers == 1 for cfg in configs)


def test_bandwidth_points_drop_duration():
    base = apply_overrides(
        {"crystal": {"length": 8e-3, "cut_angle": 36.3},
         "pump": {"wavelength": 349e-9, "w_p": 1e-3, "duration": 1e-12}},
        {},
    )
    config = make_spec(base).point_configs()[0]
    assert config.pump.bandwidth == pytest.approx(1e-9)
    assert config.source["pump"]["duration"] is None


def test_run_sweep_returns_records_in_order(coarse_config):
    spec = make_spec(coarse_config)
    records = run_sweep(spec)

    assert [r.parameter_value for r in records] == list(spec.values)
    assert all(r.ok for r in records)
    assert all(set(r.metrics) == set(GEOMETRY_OUTPUTS) for r in records)
    assert len({r.config_hash for r in records}) == 3


def test_run_sweep_reports_progress(coarse_config):
    seen = []
    run_sweep(make_spec(coarse_config), on_record=seen.append)
    assert len(seen) == 3


def test_run_sweep_is_independent_of_workers(coarse_config):
    spec = make_spec(coarse_config, values=(0.5e-3, 1e-3, 2e-3), parameter="pump_radius_w_p")
    serial = run_sweep(spec, workers=1)
    parallel = run_sweep(spec, workers=2)
    assert [r.metrics for r in serial] == [r.metrics for r in parallel]
    assert [r.config_hash for r in serial] == [r.config_hash for r in parallel]


def test_failed_point_does_not_abort_sweep(coarse_config, monkeypatch):
    original = sweeps.analyze_point

    def flaky(config, outputs=None):
        if config.pump.bandwidth > 3e-9:
            raise NormalizationError("No signal on grid")
        return original(config, outputs)

    monkeypatch.setattr(sweeps, "analyze_point", flaky)
    records = run_sweep(make_spec(coarse_config))

    assert [r.ok for r in records] == [True, True, False]
    assert "NormalizationError" in records[2].error
    assert records[2].metrics == {}


def test_unexpected_error_stays_on_its_record(coarse_config, monkeypatch):
    original = sweeps.analyze_point

    def broken(config, outputs=None):
        if config.pump.bandwidth < 1.5e-9:
            raise RuntimeError("solver exploded")
        return original(config, outputs)

    monkeypatch.setattr(sweeps, "analyze_point", broken)
    records = run_sweep(make_spec(coarse_config))

    assert [r.ok for r in records] == [False, True, True]
    assert records[0].error == "RuntimeError: solver exploded"


def test_sweep_record_validation():
    with pytest.raises(ValueError, match="not finite"):
        SweepRecord(parameter_value=1.0, metrics={"K_k": math.nan}, units={"K_k": "1"})
    with pytest.raises(ValueError, match="units"):
        SweepRecord(parameter_value=1.0, metrics={"K_k": 1.0}, units={})


def test_run_sweep_reuses_store(coarse_config, monkeypatch):
    spec = make_spec(coarse_config)
    with tempfile.TemporaryDirectory() as tmpdir:
        with SweepStore(Path(tmpdir) / "sweeps.duckdb") as store:
            first = run_sweep(spec, store=store)
            assert store.get_record_count(spec.parameter.value) == 3

            def fail(*args, **kwargs):
                raise AssertionError("stored points must not be recomputed")

            monkeypatch.setattr(sweeps, "analyze_point", fail)
            second = run_sweep(spec, store=store)

    assert [r.metrics for r in first] == [r.metrics for r in second]


def test_bundled_sweeps_load():
    names = bundled_sweep_names()
    assert names == ["filter", "geometric-filter", "pump-bandwidth", "pump-radius"]

    bandwidth = load_sweep_spec("pump-bandwidth")
    assert bandwidth.parameter is SweepParameter.PUMP_BANDWIDTH
    assert len(bandwidth.values) == 20
    assert bandwidth.values[0] == pytest.approx(0.02e-9)
    assert bandwidth.values[-1] == pytest.approx(2.0e-9)
    assert bandwidth.values[1] / bandwidth.values[0] == pytest.approx(bandwidth.values[-1] / bandwidth.values[-2])

    radius = load_sweep_spec("pump-radius")
    assert radius.values == pytest.approx(tuple(np.linspace(0.3e-3, 2.0e-3, 8)))
    assert "w_p_a" in radius.outputs


def test_spec_file_with_base_overrides(coarse_config):
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_spec(tmpdir, (
            "name: short\n"
            "parameter: pump_radius_w_p\n"
            "values: [0.5e-3, 1.0e-3]\n"
            "outputs: all\n"
            "base:\n"
            "  crystal:\n"
            "    length: 4.0e-3\n"
            "  numerics.radial_points: 64\n"
        ))
        spec = load_sweep_spec(path, coarse_config)

    assert spec.name == "short"
    assert spec.base.crystal.length == 4e-3
    assert spec.base.numerics.radial_points == 64
    assert set(spec.outputs) == set(METRIC_UNITS)


@pytest.mark.parametrize("text, message", [
    ("parameter: pump_radius_w_p\nvalues: []\noutputs: [K_k]\n", "empty"),
    ("parameter: pump_radius_w_p\nvalues: [1.0e-3]\n", "outputs"),
    ("parameter: crystal_length\nvalues: [1.0e-3]\noutputs: [K_k]\n", "unknown parameter"),
    ("parameter: pump_radius_w_p\nvalues: [1.0e-3]\noutputs: [K_k]\ncolour: red\n", "unknown sweep spec keys"),
    ("parameter: pump_radius_w_p\nvalues: {logspace: {start: 0, stop: 1, num: 3}}\noutputs: [K_k]\n", "positive"),
])
def test_invalid_spec_files(coarse_config, text, message):
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_spec(tmpdir, text)
        with pytest.raises(ConfigError, match=message):
            load_sweep_spec(path, coarse_config)


def test_missing_spec():
    with pytest.raises(FileNotFoundError, match="bundled specs"):
        load_sweep_spec("no-such-sweep")


SPECTRAL_OUTPUTS = (
    "K_omega",
    "KDelta_omega",
    "KDelta2_omega",
    "Delta_n_omega",
    "Delta_A_omega",
    "Delta_A2_omega",
    "Delta_C_omega",
)


@pytest.mark.slow
def test_coarse_spectral_metrics_survive_grid_doubling(coarse_config):
    base = analyze_point(coarse_config, SPECTRAL_OUTPUTS).metrics
    finer = analyze_point(apply_overrides(coarse_config, {"numerics.grid_scale": 2.0}), SPECTRAL_OUTPUTS).metrics
    for name in SPECTRAL_OUTPUTS:
        assert finer[name] == pytest.approx(base[name], rel=0.01), name


@pytest.mark.slow
def test_narrow_pump_spectral_metrics_survive_grid_doubling():
    config = apply_overrides(load_config(), {"pump.bandwidth": 0.02e-9})
    base = analyze_point(config, SPECTRAL_OUTPUTS).metrics
    finer = analyze_point(apply_overrides(config, {"numerics.grid_scale": 2.0}), SPECTRAL_OUTPUTS).metrics
    for name in SPECTRAL_OUTPUTS:
        assert finer[name] == pytest.approx(base[name], rel=0.01), name


@pytest.mark.slow
def test_bandwidth_sweep_has_interior_minimum():
    records = run_sweep(load_sweep_spec("pump-bandwidth"))
    assert all(r.ok for r in records), [r.error for r in records if not r.ok]

    bandwidths = np.array([r.parameter_value for r in records])
    K = np.array([r.metrics["K_omega"] for r in records])
    best = int(np.argmin(K))
    assert 0 < best < len(records) - 1
    assert 0.1e-9 <= bandwidths[best] <= 0.5e-9
    assert 45 <= K[best] <= 100

    spectrum = np.array([r.metrics["Delta_n_omega"] for r in records])
    assert np.all(np.diff(spectrum) >= -1e-3 * spectrum[:-1])

    # the coherence width grows with the pump bandwidth, then levels off
    auto = np.array([r.metrics["Delta_A_omega"] for r in records])
    steps = auto[1:] / auto[:-1]
    assert np.mean(steps[-3:]) < np.mean(steps[:3])
    assert all(r.metrics["KDelta_omega"] < r.metrics["K_omega"] for r in records)


@pytest.mark.slow
def test_radius_sweep_mode_counts_grow():
    records = run_sweep(load_sweep_spec("pump-radius"))
    assert all(r.ok for r in records), [r.error for r in records if not r.ok]
    for name in ("K_kphi", "K_k", "K_phi"):
        values = [r.metrics[name] for r in records]
        assert all(b >= a for a, b in zip(values, values[1:])), name
    for r in records:
        assert r.metrics["KDelta_kphi"] < r.metrics["K_kphi"]
        assert r.metrics["KDelta2_kphi"] < r.metrics["K_kphi"]


@pytest.mark.slow
def test_width_ratio_mode_counts_at_default_pump():
    metrics = analyze_point(load_config(), ("K_kphi", "KDelta_kphi", "KDelta2_kphi")).metrics
    # intensity-like widths land near the full count, amplitude widths well below it
    assert 0.5 <= metrics["KDelta2_kphi"] / metrics["K_kphi"] <= 0.8
    assert metrics["KDelta_kphi"] / metrics["K_kphi"] < 0.5


@pytest.mark.slow
def test_lowest_modes_have_q_nodes_at_default_config():
    point = analyze_point(load_config(), ("K_kphi", "K_omega"))
    radial = point.transverse.summary.per_m[0]
    spectral = point.spectral.decomposition
    for q in range(3):
        assert mode_nodes(radial, q) == q
        assert mode_nodes(spectral, q) == q
