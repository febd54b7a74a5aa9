from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd

from twinbeam import __version__
from twinbeam.correlations import Correlation2D, Profile1D, intensity_radial, intensity_spectrum
from twinbeam.kernels import KernelMatrix, RidgeKernel
from twinbeam.schmidt import SchmidtDecomposition, mode_nodes
from twinbeam.sweeps import METRIC_UNITS


FLOAT_FORMAT = "%.17g"
HEADER_PREFIX = "# "


def write_table(path: Path, table: pd.DataFrame, header: Optional[dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        for key, value in (header or {}).items():
            if isinstance(value, float):
                value = FLOAT_FORMAT % value
            f.write(f"{HEADER_PREFIX}{key}: {value}\n")
        table.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def read_table(path: Path) -> tuple[pd.DataFrame, dict[str, str]]:
    header: dict[str, str] = {}
    skip = 0
    with Path(path).open() as f:
        for line in f:
            if not line.startswith(HEADER_PREFIX):
                break
            key, _, value = line[len(HEADER_PREFIX):].rstrip("\n").partition(": ")
            header[key] = value
            skip += 1
    table = pd.read_csv(path, skiprows=skip, float_precision="round_trip")
    return table, header


def grid_header(prefix: str, grid) -> dict[str, Any]:
    return {f"{prefix}.{key}": value for key, value in grid.describe().items()}


def write_metrics(path: Path, metrics: dict[str, float], units: dict[str, str], config_hash: str) -> Path:
    table = pd.DataFrame({
        "metric": list(metrics),
        "value": [float(v) for v in metrics.values()],
        "unit": [units[name] for name in metrics],
    })
    return write_table(path, table, {"config_hash": config_hash})


def write_profile(path: Path, profile: Profile1D, idler: Optional[Profile1D], axis_name: str, unit: str) -> Path:
    data = {
        axis_name: profile.axis.points,
        "n_signal": profile.values,
        "n_signal_normalized": profile.normalized().values,
    }
    if idler is not None:
        data["n_idler"] = idler.values
    header = {
        "unit": unit,
        "fwhm": profile.fwhm,
        "peak": profile.peak_location,
        "normalization": f"integral of n_signal_normalized d{axis_name} / {axis_name}0 = 1",
        **grid_header("grid", profile.axis),
    }
    return write_table(path, pd.DataFrame(data), header)


def write_modes(path: Path, decomposition: SchmidtDecomposition, axis_name: str, unit: str) -> Path:
    grid = decomposition.signal_grid
    data: dict[str, Any] = {axis_name: grid.points}
    header: dict[str, Any] = {
        "unit": unit,
        "schmidt_number": decomposition.schmidt_number,
        "normalization": f"integral of intensity d{axis_name} / {axis_name}0 = 1",
    }
    if decomposition.order_m is not None:
        header["order_m"] = decomposition.order_m
    for q in range(decomposition.n_modes):
        mode = decomposition.signal_modes[:, q]
        data[f"mode_{q}_re"] = mode.real
        data[f"mode_{q}_im"] = mode.imag
        data[f"mode_{q}_intensity"] = np.abs(mode) ** 2 * grid.center
        header[f"mode_{q}.lambda"] = float(decomposition.coefficients[q])
        header[f"mode_{q}.nodes"] = mode_nodes(decomposition, q)
    header.update(grid_header("grid", grid))
    return write_table(path, pd.DataFrame(data), header)


def write_coefficients(path: Path, decomposition: SchmidtDecomposition, limit: int = 512) -> Path:
    count = min(limit, len(decomposition.coefficients))
    table = pd.DataFrame({
        "q": np.arange(count),
        "lambda": decomposition.coefficients[:count],
        "probability": decomposition.probabilities[:count],
    })
    return write_table(path, table, {"schmidt_number": decomposition.schmidt_number})


def write_azimuthal_orders(path: Path, summary) -> Path:
    orders = sorted(summary.per_m)
    weights = summary.azimuthal_weights
    table = pd.DataFrame({
        "m": orders,
        "weight": [weights[m] for m in orders],
        "K_m": [summary.per_m[m].schmidt_number for m in orders],
        "lambda_0": [float(summary.per_m[m].coefficients[0]) for m in orders],
    })
    header = {"K_kphi": summary.K_kphi, "K_k": summary.K_k, "K_phi": summary.K_phi}
    return write_table(path, table, header)


def write_sections(
    path: Path,
    auto: Correlation2D,
    cross: Correlation2D,
    auto_center: float,
    cross_center: float,
    axis_name: str,
    unit: str,
) -> Path:
    """Sections A(x, x0) and C(x, y0) relative to their values at the centre."""
    rows = auto.row_axis.points
    table = pd.DataFrame({
        axis_name: rows,
        f"delta_{axis_name}": rows - auto_center,
        "A_abs": auto.relative_section(auto_center),
        "A_abs2": auto.relative_section(auto_center, power=2),
        "C": cross.section(cross_center) / np.max(cross.section(cross_center)),
    })
    header = {
        "unit": unit,
        "auto_center": auto_center,
        "cross_center": cross_center,
        **grid_header("grid", auto.row_axis),
    }
    return write_table(path, table, header)


def write_kernel(path: Path, kernel: KernelMatrix | RidgeKernel) -> Path:
    if isinstance(kernel, RidgeKernel):
        # only the stored ridge; entries off it are zero
        entries = kernel.to_sparse().tocoo()
        order = np.lexsort((entries.col, entries.row))
        rows, cols, values = entries.row[order], entries.col[order], entries.data[order]
    else:
        rows, cols = (index.ravel() for index in np.indices(kernel.values.shape))
        values = kernel.values.ravel()
    table = pd.DataFrame({
        "row": rows,
        "col": cols,
        "re": values.real,
        "im": values.imag,
    })
    header = {
        "label": kernel.label.value,
        "storage": "ridge" if isinstance(kernel, RidgeKernel) else "dense",
        **grid_header("row_grid", kernel.row_grid),
        **grid_header("col_grid", kernel.col_grid),
    }
    if kernel.order_m is not None:
        header["order_m"] = kernel.order_m
    write_table(path, table, header)

    # grid nodes and weights next to the kernel so it can be re-weighted
    grids = pd.DataFrame({
        "index": np.arange(max(len(kernel.row_grid), len(kernel.col_grid))),
    })
    for prefix, grid in (("row", kernel.row_grid), ("col", kernel.col_grid)):
        points = np.full(len(grids), np.nan)
        weights = np.full(len(grids), np.nan)
        points[: len(grid)] = grid.points
        weights[: len(grid)] = grid.weights
        grids[f"{prefix}_point"] = points
        grids[f"{prefix}_weight"] = weights
    write_table(path.with_name(f"{path.stem}_grids.csv"), grids, {"label": kernel.label.value})
    return path


def write_sweep(path: Path, spec, records: list) -> Path:
    data: dict[str, list] = {spec.parameter.value: [r.parameter_value for r in records]}
    for name in spec.outputs:
        data[name] = [r.metrics.get(name, np.nan) for r in records]
    data["error"] = [r.error or "" for r in records]
    header: dict[str, Any] = {
        "sweep": spec.name,
        "parameter": spec.parameter.value,
        "parameter_unit": spec.parameter.unit,
        "base_config_hash": spec.base.fingerprint(),
    }
    header.update({f"unit.{name}": METRIC_UNITS[name] for name in spec.outputs})
    return write_table(path, pd.DataFrame(data), header)


def write_manifest(path: Path, config_source: dict, config_hash: str, **sections: Any) -> Path:
    manifest = {
        "version": __version__,
        "config_hash": config_hash,
        "config": config_source,
        **sections,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def write_error(directory: Path, error: BaseException) -> Path:
    path = Path(directory) / "error.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"error": type(error).__name__, "message": str(error)}
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


def point_grids(result) -> dict[str, Any]:
    grids: dict[str, Any] = {}
    if result.transverse is not None:
        transverse = result.transverse
        grids["radial"] = transverse.radial_grid.describe()
        grids["azimuthal_window"] = transverse.azimuthal_window
        grids["azimuthal_points"] = result.config.numerics.azimuthal_points
        grids["azimuthal_orders"] = transverse.summary.m_count
        grids["azimuthal_section_rows"] = transverse.azimuthal_section.row_grid.describe()
        grids["azimuthal_section_cols"] = transverse.azimuthal_section.col_grid.describe()
    if result.spectral is not None:
        grids["spectral"] = result.spectral.kernel.row_grid.describe()
    return grids


def write_point(result, directory: Path, export_kernels: bool = False) -> list[Path]:
    """Write every table of one analyzed point plus its manifest."""
    directory = Path(directory)
    config = result.config
    written = [write_metrics(directory / "metrics.csv", result.metrics, result.units, config.fingerprint())]

    if result.transverse is not None:
        transverse = result.transverse
        idler = intensity_radial(transverse.radial_section, field="idler")
        written.append(write_profile(directory / "radial_intensity.csv", transverse.radial_profile, idler, "k", "rad/m"))
        written.append(write_modes(directory / "radial_modes.csv", transverse.summary.per_m[0], "k", "rad/m"))
        written.append(write_azimuthal_orders(directory / "azimuthal_orders.csv", transverse.summary))
        written.append(write_sections(
            directory / "radial_sections.csv",
            transverse.radial_auto,
            transverse.radial_cross,
            transverse.radial_profile.peak_location,
            result.geometry.kappa_i0,
            "k",
            "rad/m",
        ))
        written.append(write_sections(
            directory / "azimuthal_sections.csv",
            transverse.azimuthal_auto,
            transverse.azimuthal_cross,
            0.0,
            0.0,
            "phi",
            "rad",
        ))
        if export_kernels:
            written.append(write_kernel(directory / "kernel_T0.csv", transverse.component_zero))

    if result.spectral is not None:
        spectral = result.spectral
        idler = intensity_spectrum(spectral.kernel, field="idler")
        written.append(write_profile(directory / "spectral_intensity.csv", spectral.profile, idler, "omega", "rad/s"))
        written.append(write_modes(directory / "spectral_modes.csv", spectral.decomposition, "omega", "rad/s"))
        written.append(write_coefficients(directory / "spectral_coefficients.csv", spectral.decomposition))
        written.append(write_sections(
            directory / "spectral_sections.csv",
            spectral.auto,
            spectral.cross,
            spectral.profile.peak_location,
            result.geometry.omega_i0,
            "omega",
            "rad/s",
        ))
        if export_kernels:
            written.append(write_kernel(directory / "kernel_F.csv", spectral.kernel))

    written.append(write_manifest(
        directory / "manifest.json",
        config.to_dict(),
        config.fingerprint(),
        grids=point_grids(result),
    ))
    return written
