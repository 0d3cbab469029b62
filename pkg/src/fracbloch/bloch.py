"""Plane-wave discretization of the fractional Bloch operator.

The operator at quasimomentum k acts on truncated Fourier coefficients as

    (H c)(m) = |k + m.k|^sigma c(m) + sum_n Vhat(m - n) c(n),

a dense Hermitian matrix in the fixed row-major plane-wave ordering.  Dense
eigensolves are deliberate: the default sizes are tiny and degeneracies at K
are handled robustly.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigError, ContractError, SolverError
from .lattice import LatticeBasis, PlaneWaveBasis, RotationIndexMap
from .potential import FourierPotential

__all__ = [
    "BlochMatrix",
    "BlochSolution",
    "assemble_bloch_matrix",
    "solve_bands",
    "band_sweep",
    "fractional_multiplier",
    "p_sigma_multipliers",
    "apply_p_sigma",
    "resolvent_apply",
    "commutator_check",
]


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not (1.0 < sigma <= 2.0):
        raise ConfigError(f"fractional exponent sigma={sigma} outside (1, 2]")
    return sigma


def fractional_multiplier(momenta: np.ndarray, sigma: float) -> np.ndarray:
    """|q|^sigma for an (…, 2) array of momenta."""
    return np.linalg.norm(momenta, axis=-1) ** sigma


@dataclass(frozen=True)
class BlochMatrix:
    k: np.ndarray
    sigma: float
    matrix: np.ndarray
    pw: PlaneWaveBasis

    @property
    def is_real(self) -> bool:
        return bool(np.all(self.matrix.imag == 0.0))


@dataclass(frozen=True)
class BlochSolution:
    """Lowest eigenpairs at one quasimomentum, ascending, orthonormal."""

    k: np.ndarray
    sigma: float
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, one per band
    pw: PlaneWaveBasis

    @property
    def count(self) -> int:
        return len(self.eigenvalues)


def assemble_bloch_matrix(basis: LatticeBasis, pw: PlaneWaveBasis,
                          pot: FourierPotential, k: np.ndarray,
                          sigma: float) -> BlochMatrix:
    """Dense Hermitian matrix of the operator at quasimomentum k."""
    sigma = _check_sigma(sigma)
    real_ok, res = pot.is_real()
    if not real_ok:
        raise ConfigError(f"potential is not real-valued (residual {res:.3e})")
    k = np.asarray(k, float)
    momenta = pw.momenta(k)
    diag = fractional_multiplier(momenta, sigma)

    idx = pw.index_list
    r = pot.index_radius
    H = np.zeros((pw.size, pw.size), dtype=complex)
    if r > 0 and pot.coeffs:
        dense = pot.dense(r)
        d1 = idx[:, None, 0] - idx[None, :, 0]
        d2 = idx[:, None, 1] - idx[None, :, 1]
        inside = (np.abs(d1) <= r) & (np.abs(d2) <= r)
        H[inside] = dense[d1[inside] + r, d2[inside] + r]
    H[np.diag_indices(pw.size)] += diag
    if np.all(H.imag == 0.0):
        H = H.real.astype(float)
    return BlochMatrix(k=k, sigma=sigma, matrix=H, pw=pw)


def solve_bands(H: BlochMatrix, count: int | None = None,
                eigenvectors: bool = True) -> BlochSolution:
    """Lowest ``count`` eigenpairs of a Bloch matrix.

    Uses the real-symmetric fast path when the potential coefficients are
    real.  Raises SolverError with conditioning info on LAPACK failure.
    """
    n = H.matrix.shape[0]
    if count is None:
        count = n
    if not (1 <= count <= n):
        raise ConfigError(f"band count {count} outside [1, {n}]")
    subset = None if count == n else (0, count - 1)
    try:
        if eigenvectors:
            vals, vecs = scipy.linalg.eigh(H.matrix, subset_by_index=subset)
        else:
            vals = scipy.linalg.eigh(H.matrix, subset_by_index=subset,
                                     eigvals_only=True)
            vecs = np.zeros((n, 0))
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        dmin, dmax = float(np.min(np.real(np.diag(H.matrix)))), float(
            np.max(np.real(np.diag(H.matrix))))
        raise SolverError(
            f"Hermitian eigensolve failed at k={H.k.tolist()} "
            f"(size {n}, diagonal range [{dmin:.3e}, {dmax:.3e}]): {exc}"
        ) from exc
    vals = vals[:count]
    vecs = vecs[:, :count] if eigenvectors else vecs
    if eigenvectors and vecs.dtype != complex:
        vecs = vecs.astype(complex)
    return BlochSolution(k=H.k, sigma=H.sigma, eigenvalues=vals,
                         eigenvectors=vecs, pw=H.pw)


def band_sweep(basis: LatticeBasis, pw: PlaneWaveBasis, pot: FourierPotential,
               sigma: float, k_list: np.ndarray, count: int,
               threads: int = 1) -> np.ndarray:
    """Band energies along a list of quasimomenta.

    Returns (len(k_list), count); rows are independent eigenvalue solves and
    may run concurrently with deterministic ordering.
    """
    k_list = np.atleast_2d(np.asarray(k_list, float))
    if len(k_list) == 0:
        raise ConfigError("band_sweep needs a nonempty k list")

    def one(i):
        try:
            H = assemble_bloch_matrix(basis, pw, pot, k_list[i], sigma)
            return solve_bands(H, count, eigenvectors=False).eigenvalues
        except SolverError as exc:
            raise SolverError(f"row {i}: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(one, range(len(k_list))))
    else:
        rows = [one(i) for i in range(len(k_list))]
    return np.vstack(rows)


def p_sigma_multipliers(pw: PlaneWaveBasis, sigma: float) -> np.ndarray:
    """(2, size) multiplier arrays of the first-order symbol correction.

    Component a is i*sigma*|q_m|^(sigma-2) * (q_m)_a with q_m = K + m.k.
    """
    sigma = _check_sigma(sigma)
    q = pw.momenta()
    mag = np.linalg.norm(q, axis=1)
    if mag.min() < 1e-9:
        raise ContractError("plane-wave momentum hit zero; basis must be K-centred")
    scale = 1j * sigma * mag ** (sigma - 2.0)
    return np.vstack([scale * q[:, 0], scale * q[:, 1]])


def apply_p_sigma(coeffs: np.ndarray, pw: PlaneWaveBasis, sigma: float) -> np.ndarray:
    """Vector-valued result (2, size): both components applied to coeffs."""
    return p_sigma_multipliers(pw, sigma) * np.asarray(coeffs)[None, :]


def resolvent_apply(sol: BlochSolution, E_D: float, phi1: np.ndarray,
                    phi2: np.ndarray, f: np.ndarray,
                    kernel_tol: float = 1e-6) -> np.ndarray:
    """Reduced resolvent at the degenerate energy: u = Linv P_perp f.

    ``sol`` must hold the full eigenbasis at K.  Bands within ``kernel_tol``
    of E_D are excluded; the output additionally gets projected off phi1 and
    phi2 to clean up roundoff.
    """
    if sol.count != sol.pw.size:
        raise ContractError("resolvent needs the full eigenbasis at K")
    gaps = sol.eigenvalues - E_D
    kernel = np.abs(gaps) < kernel_tol * max(1.0, abs(E_D))
    if kernel.sum() != 2:
        raise ContractError(
            f"E_D={E_D:.12g} does not select a two-fold degenerate pair "
            f"(matched {int(kernel.sum())} bands)")
    keep = ~kernel
    near = np.abs(gaps[keep])
    if near.min() < 1e3 * kernel_tol * max(1.0, abs(E_D)):
        raise ContractError(
            f"near-singular resolvent: closest retained band gap {near.min():.3e}")
    V = sol.eigenvectors[:, keep]
    amps = V.conj().T @ np.asarray(f, complex)
    u = V @ (amps / gaps[keep])
    for phi in (phi1, phi2):
        u = u - phi * (np.vdot(phi, u))
    return u


def commutator_check(basis: LatticeBasis, pw: PlaneWaveBasis,
                     pot: FourierPotential, sigma: float,
                     trial: np.ndarray, rot: RotationIndexMap) -> float:
    """Norm of R(H c) - H(R c) on indices where both sides are exact.

    Exactness needs the rotated image inside the truncation and the
    potential convolution to touch only stored entries.
    """
    H = assemble_bloch_matrix(basis, pw, pot, basis.K, sigma).matrix
    trial = np.asarray(trial, complex)
    lhs = rot.apply(H @ trial)
    rhs = H @ rot.apply(trial)
    idx = pw.index_list
    interior = np.max(np.abs(idx), axis=1) <= pw.N - pot.index_radius
    valid = interior & ~rot.dropped
    if not np.any(valid):
        raise ContractError("no interior indices survive the drop-set")
    return float(np.linalg.norm((lhs - rhs)[valid]))
