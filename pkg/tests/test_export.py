import json
import math
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from twinbeam.kernels import GridKind, KernelLabel, KernelMatrix, RidgeKernel, gauss_legendre_grid, trapezoid_grid
from twinbeam.sweeps import SweepRecord, SweepSpec
from twinbeam.utils.export import (
    read_table,
    write_error,
    write_kernel,
    write_metrics,
    write_point,
    write_sweep,
    write_table,
)


def test_table_round_trip_is_exact():
    values = np.array([1.0 / 3.0, math.pi * 1e15, 2.778e-4, -1e-300])
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_table(Path(tmpdir) / "t.csv", pd.DataFrame({"x": values}), {"center": math.e, "unit": "rad/m"})
        table, header = read_table(path)

    assert table["x"].tolist() == values.tolist()
    assert float(header["center"]) == math.e
    assert header["unit"] == "rad/m"


def test_write_metrics():
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_metrics(
            Path(tmpdir) / "metrics.csv",
            {"K_k": 3.5, "Delta_A_phi": 0.02},
            {"K_k": "1", "Delta_A_phi": "rad"},
            "0123456789abcdef",
        )
        table, header = read_table(path)

    assert header == {"config_hash": "0123456789abcdef"}
    assert table["metric"].tolist() == ["K_k", "Delta_A_phi"]
    assert table["unit"].tolist() == ["1", "rad"]
    assert table["value"].tolist() == [3.5, 0.02]


def test_write_sweep(coarse_config):
    spec = SweepSpec(
        name="widths",
        parameter="pump_radius_w_p",
        values=(1e-3, 2e-3),
        outputs=("K_k", "w_p_a"),
        base=coarse_config,
    )
    records = [
        SweepRecord(1e-3, {"K_k": 4.0, "w_p_a": 2.7e-4}, {"K_k": "1", "w_p_a": "m"}),
        SweepRecord(2e-3, {}, {}, error="NormalizationError: no signal"),
    ]
    with tempfile.TemporaryDirectory() as tmpdir:
        table, header = read_table(write_sweep(Path(tmpdir) / "sweep.csv", spec, records))

    assert list(table.columns) == ["pump_radius_w_p", "K_k", "w_p_a", "error"]
    assert table["K_k"][0] == 4.0
    assert math.isnan(table["K_k"][1])
    assert table["error"][1].startswith("NormalizationError")
    assert header["parameter_unit"] == "m"
    assert header["unit.w_p_a"] == "m"
    assert header["base_config_hash"] == coarse_config.fingerprint()


def test_write_kernel_with_grids():
    grid = gauss_legendre_grid(GridKind.RADIAL, 1.0, 2.0, 3, center=1.5)
    kernel = KernelMatrix(np.arange(9).reshape(3, 3) * (1 + 1j), grid, grid, KernelLabel.TRANSVERSE, order_m=2)
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_kernel(Path(tmpdir) / "kernel_T0.csv", kernel)
        table, header = read_table(path)
        grids, _ = read_table(Path(tmpdir) / "kernel_T0_grids.csv")

    assert len(table) == 9
    assert table["re"].tolist() == table["im"].tolist()
    assert header["order_m"] == "2"
    assert header["label"] == kernel.label.value
    assert grids["row_point"].tolist() == grid.points.tolist()
    assert grids["col_weight"].tolist() == grid.weights.tolist()


def make_ridge_kernel(n: int = 5) -> RidgeKernel:
    grid = trapezoid_grid(GridKind.SPECTRAL, -1.0, 1.0, n)
    columns = (n - 1) - np.arange(n)[None, :] + np.arange(-1, 2)[:, None]
    inside = (columns >= 0) & (columns < n)
    band = np.where(inside, 1 + 1j, 0.0)
    return RidgeKernel(band=band, columns=np.where(inside, columns, -1), grid=grid)


def test_write_ridge_kernel_keeps_only_the_ridge():
    kernel = make_ridge_kernel()
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_kernel(Path(tmpdir) / "kernel_F.csv", kernel)
        table, header = read_table(path)

    assert header["storage"] == "ridge"
    assert len(table) == 13
    assert set((table["row"] + table["col"]).tolist()) == {3, 4, 5}
    assert table["row"].is_monotonic_increasing
    assert table["re"].tolist() == [1.0] * 13


def test_write_error():
    with tempfile.TemporaryDirectory() as tmpdir:
        path = write_error(Path(tmpdir) / "out", ValueError("bad cut angle"))
        payload = json.loads(path.read_text())

    assert payload == {"error": "ValueError", "message": "bad cut angle"}


def test_write_point(coarse_point):
    with tempfile.TemporaryDirectory() as tmpdir:
        directory = Path(tmpdir)
        written = write_point(coarse_point, directory)
        names = {p.name for p in written}
        manifest = json.loads((directory / "manifest.json").read_text())
        metrics, _ = read_table(directory / "metrics.csv")
        profile, profile_header = read_table(directory / "radial_intensity.csv")

    assert {
        "metrics.csv",
        "radial_intensity.csv",
        "radial_modes.csv",
        "azimuthal_orders.csv",
        "radial_sections.csv",
        "azimuthal_sections.csv",
        "spectral_intensity.csv",
        "spectral_modes.csv",
        "spectral_coefficients.csv",
        "spectral_sections.csv",
        "manifest.json",
    } <= names
    assert manifest["config_hash"] == coarse_point.config.fingerprint()
    assert manifest["grids"]["azimuthal_points"] == 128
    assert dict(zip(metrics["metric"], metrics["value"])) == pytest.approx(coarse_point.metrics)
    assert float(profile_header["fwhm"]) == coarse_point.metrics["Delta_n_k"]
    assert profile["n_signal"].tolist() == coarse_point.transverse.radial_profile.values.tolist()
