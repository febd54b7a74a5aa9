from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import islice
from typing import Iterable

import numpy as np
import scipy.linalg
from scipy.signal import find_peaks

from twinbeam.errors import DecompositionError, NormalizationError
from twinbeam.kernels import ORDER_BLOCK, Grid, KernelLabel, KernelMatrix, RidgeKernel


NORMALIZATION_TOLERANCE = 1e-8
DEFAULT_TRUNCATION = 1e-12
NODE_PROMINENCE = 0.05


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    coefficients: np.ndarray
    signal_modes: np.ndarray
    idler_modes: np.ndarray
    schmidt_number: float
    source_label: KernelLabel
    order_m: int | None
    signal_grid: Grid
    idler_grid: Grid
    norm: float

    @property
    def n_modes(self) -> int:
        return self.signal_modes.shape[1]

    @property
    def probabilities(self) -> np.ndarray:
        return self.coefficients**2


@dataclass(frozen=True, eq=False)
class TransverseModeSummary:
    per_m: dict[int, SchmidtDecomposition]
    norms: dict[int, float]
    K_kphi: float
    K_k: float
    K_phi: float
    # K_phi is the quotient K_kphi / K_k, not an independent decomposition
    K_phi_approximate: bool = True

    @property
    def m_count(self) -> int:
        return len(self.per_m)

    @property
    def azimuthal_weights(self) -> dict[int, float]:
        total = math.fsum(order_multiplicity(m) * n**2 for m, n in self.norms.items())
        return {m: n**2 / total for m, n in sorted(self.norms.items())}


def schmidt_number(coefficients, truncation: float = DEFAULT_TRUNCATION) -> float:
    values = np.asarray(coefficients, dtype=float).ravel()
    if values.size == 0:
        raise NormalizationError("Schmidt number of an empty coefficient set")
    if not np.all(np.isfinite(values)) or np.any(values < 0):
        raise NormalizationError("Schmidt coefficients must be finite and non-negative")

    probabilities = values**2
    total = math.fsum(probabilities)
    if abs(total - 1.0) > NORMALIZATION_TOLERANCE:
        raise NormalizationError(f"Schmidt coefficients are not normalized: sum of squares is {total!r}")

    kept = probabilities[probabilities >= truncation]
    return 1.0 / math.fsum(kept**2)


def _condition_report(matrix: np.ndarray) -> str:
    try:
        condition = float(np.linalg.cond(matrix, p=1))
    except Exception:
        condition = math.inf
    finite = int(np.count_nonzero(np.isfinite(matrix)))
    return f"shape {matrix.shape}, {finite} finite entries, 1-norm condition estimate {condition:.3e}"


def _singular_values(matrix: np.ndarray, with_vectors: bool):
    for driver in ("gesdd", "gesvd"):
        try:
            if with_vectors:
                return scipy.linalg.svd(matrix, full_matrices=False, lapack_driver=driver)
            return scipy.linalg.svd(matrix, compute_uv=False, lapack_driver=driver)
        except np.linalg.LinAlgError:
            continue
    raise DecompositionError(f"SVD did not converge: {_condition_report(matrix)}")


def _fix_phases(signal: np.ndarray, idler: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    columns = np.arange(signal.shape[1])
    pivots = signal[np.argmax(np.abs(signal), axis=0), columns]
    phases = pivots / np.abs(pivots)
    return signal / phases[None, :], idler * phases[None, :]


def _banded_density(matrix) -> np.ndarray:
    """Lower band storage of matrix @ matrix^H for a sparse matrix."""
    density = (matrix @ matrix.conj().T).tocsr()
    entries = density.tocoo()
    reach = int(np.max(np.abs(entries.row - entries.col))) if entries.nnz else 0
    n = density.shape[0]
    lower = np.zeros((reach + 1, n), dtype=complex)
    for offset in range(reach + 1):
        lower[offset, : n - offset] = density.diagonal(-offset)
    return lower


def _decompose_ridge(
    kernel: RidgeKernel,
    with_modes: bool,
    n_modes: int | None,
    truncation: float,
) -> SchmidtDecomposition:
    if not np.all(np.isfinite(kernel.band)):
        raise NormalizationError(f"Kernel {kernel.label.value} has non-finite entries")
    norm = kernel.norm()
    if norm <= np.finfo(float).tiny:
        raise NormalizationError(f"Kernel {kernel.label.value} has zero norm")

    matrix = kernel.weighted() / norm
    lower = _banded_density(matrix)
    n = lower.shape[1]
    try:
        eigenvalues = scipy.linalg.eigvals_banded(lower, lower=True)
    except (np.linalg.LinAlgError, ValueError) as e:
        raise DecompositionError(
            f"Banded eigensolver did not converge: size {n}, band {lower.shape[0] - 1}"
        ) from e
    singular = np.sqrt(np.clip(eigenvalues[::-1], 0.0, None))

    scale = np.sqrt(kernel.grid.weights)
    if with_modes:
        count = n if n_modes is None else min(n_modes, n)
        try:
            values, vectors = scipy.linalg.eig_banded(
                lower, lower=True, select="i", select_range=(n - count, n - 1)
            )
        except (np.linalg.LinAlgError, ValueError) as e:
            raise DecompositionError(
                f"Banded eigensolver did not converge: size {n}, band {lower.shape[0] - 1}"
            ) from e
        vectors = vectors[:, ::-1]
        sigma = np.sqrt(np.clip(values[::-1], np.finfo(float).tiny, None))
        signal = vectors / scale[:, None]
        # idler modes are the right singular vectors, M^T conj(u) / sigma
        idler = (matrix.T @ vectors.conj()) / sigma[None, :] / scale[:, None]
        signal, idler = _fix_phases(signal, idler)
    else:
        signal = np.empty((n, 0), dtype=complex)
        idler = np.empty((n, 0), dtype=complex)

    coefficients = singular / math.sqrt(math.fsum(singular**2))
    return SchmidtDecomposition(
        coefficients=coefficients,
        signal_modes=signal,
        idler_modes=idler,
        schmidt_number=schmidt_number(coefficients, truncation),
        source_label=kernel.label,
        order_m=kernel.order_m,
        signal_grid=kernel.row_grid,
        idler_grid=kernel.col_grid,
        norm=norm,
    )


def decompose(
    kernel: KernelMatrix | RidgeKernel,
    *,
    with_modes: bool = True,
    n_modes: int | None = None,
    truncation: float = DEFAULT_TRUNCATION,
) -> SchmidtDecomposition:
    if isinstance(kernel, RidgeKernel):
        return _decompose_ridge(kernel, with_modes, n_modes, truncation)
    if not np.all(np.isfinite(kernel.values)):
        raise NormalizationError(f"Kernel {kernel.label.value} has non-finite entries")
    norm = kernel.norm()
    if norm <= np.finfo(float).tiny:
        raise NormalizationError(f"Kernel {kernel.label.value} has zero norm")

    row_scale = np.sqrt(kernel.row_grid.weights)
    col_scale = np.sqrt(kernel.col_grid.weights)
    matrix = kernel.weighted() / norm

    if with_modes:
        u, singular, vh = _singular_values(matrix, with_vectors=True)
        count = len(singular) if n_modes is None else min(n_modes, len(singular))
        signal = u[:, :count] / row_scale[:, None]
        idler = vh[:count].T / col_scale[:, None]
        signal, idler = _fix_phases(signal, idler)
    else:
        singular = _singular_values(matrix, with_vectors=False)
        signal = np.empty((len(row_scale), 0), dtype=complex)
        idler = np.empty((len(col_scale), 0), dtype=complex)

    coefficients = singular / math.sqrt(math.fsum(singular**2))
    return SchmidtDecomposition(
        coefficients=coefficients,
        signal_modes=signal,
        idler_modes=idler,
        schmidt_number=schmidt_number(coefficients, truncation),
        source_label=kernel.label,
        order_m=kernel.order_m,
        signal_grid=kernel.row_grid,
        idler_grid=kernel.col_grid,
        norm=norm,
    )


def reconstruct(decomposition: SchmidtDecomposition, rank: int | None = None) -> np.ndarray:
    """Normalized kernel values rebuilt from the first `rank` mode pairs."""
    rank = decomposition.n_modes if rank is None else min(rank, decomposition.n_modes)
    lam = decomposition.coefficients[:rank]
    return (decomposition.signal_modes[:, :rank] * lam[None, :]) @ decomposition.idler_modes[:, :rank].T


def mode_nodes(
    decomposition: SchmidtDecomposition,
    q: int,
    field: str = "signal",
    prominence: float = NODE_PROMINENCE,
) -> int:
    modes = decomposition.signal_modes if field == "signal" else decomposition.idler_modes
    if not 0 <= q < modes.shape[1]:
        raise IndexError(f"mode {q} not available ({modes.shape[1]} modes kept)")
    intensity = np.abs(modes[:, q]) ** 2
    padded = np.concatenate(([0.0], intensity, [0.0]))
    peaks, _ = find_peaks(padded, prominence=prominence * float(intensity.max()))
    return max(len(peaks) - 1, 0)


def order_multiplicity(m: int) -> int:
    return 1 if m == 0 else 2


def joint_coefficients(per_m: dict[int, SchmidtDecomposition], norms: dict[int, float]) -> np.ndarray:
    total = math.fsum(order_multiplicity(m) * norms[m] ** 2 for m in per_m)
    parts = []
    for m in sorted(per_m):
        scaled = norms[m] * per_m[m].coefficients / math.sqrt(total)
        parts.extend([scaled] * order_multiplicity(m))
    return np.concatenate(parts)


def transverse_summary(
    per_m: dict[int, SchmidtDecomposition],
    norms: dict[int, float],
    truncation: float = DEFAULT_TRUNCATION,
) -> TransverseModeSummary:
    if not per_m:
        raise ValueError("Transverse summary needs at least one azimuthal order")
    if 0 not in per_m:
        raise ValueError("Transverse summary needs the m = 0 decomposition")
    missing = set(per_m) - set(norms)
    if missing:
        raise ValueError(f"Missing norms for azimuthal orders {sorted(missing)}")

    K_kphi = schmidt_number(joint_coefficients(per_m, norms), truncation)
    K_k = per_m[0].schmidt_number
    return TransverseModeSummary(
        per_m=dict(sorted(per_m.items())),
        norms={m: norms[m] for m in sorted(per_m)},
        K_kphi=K_kphi,
        K_k=K_k,
        K_phi=K_kphi / K_k,
    )


def summarize_components(
    components: Iterable[KernelMatrix],
    workers: int = 1,
    n_modes: int | None = None,
    truncation: float = DEFAULT_TRUNCATION,
) -> TransverseModeSummary:
    """Decompose every azimuthal component and aggregate.

    Mode functions are kept for m = 0 only; the other orders contribute their
    coefficients and norms.
    """

    def work(kernel: KernelMatrix) -> SchmidtDecomposition:
        return decompose(
            kernel,
            with_modes=kernel.order_m == 0,
            n_modes=n_modes,
            truncation=truncation,
        )

    per_m: dict[int, SchmidtDecomposition] = {}
    iterator = iter(components)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        while True:
            batch = list(islice(iterator, ORDER_BLOCK))
            if not batch:
                break
            for decomposition in pool.map(work, batch):
                per_m[decomposition.order_m] = decomposition

    norms = {m: d.norm for m, d in per_m.items()}
    return transverse_summary(per_m, norms, truncation)
