"""Dirac-point detection and characterization at the K vertex.

Finds the protected two-fold degeneracy, splits the eigenpair by rotation
symmetry, fixes the gauge so the velocity pairing is real positive, and
computes the scalar data of the effective envelope model: the velocity, the
mass coefficient against an odd perturbation, and the two cubic interaction
coefficients.  A cone fit against band tables cross-validates the velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .bloch import (BlochSolution, apply_p_sigma, assemble_bloch_matrix,
                    solve_bands)
from .errors import (ConfigError, DegenerateVelocityError,
                     FitFailureError, NoDegeneracyError, NotIsolatedError,
                     RotationEigenvalueMismatchError, StructureViolationError)
from .lattice import LatticeBasis, PlaneWaveBasis, RotationIndexMap, rotation_index_map
from .potential import FourierPotential

__all__ = [
    "DiracPointData",
    "ConeFit",
    "find_degenerate_pair",
    "symmetry_classify",
    "conjugate_partner",
    "gauge_fix",
    "apply_periodic_potential",
    "mass_coefficient",
    "cubic_coefficients",
    "cone_fit",
    "gap_opening",
    "verify_eigenvector_expansion",
    "analyze_dirac_point",
]

TAU = np.exp(2j * np.pi / 3.0)

DEGENERACY_RTOL = 1e-8
ISOLATION_FACTOR = 10.0


def find_degenerate_pair(sol: BlochSolution, tol: float | None = None):
    """Locate the lowest isolated two-fold degeneracy at K.

    Returns (b_star, E_D) with b_star the 1-based index of the lower band of
    the pair and E_D the pair mean.  Raises NoDegeneracyError if nothing is
    within tolerance and NotIsolatedError when a third band crowds the pair
    (e.g. the multiplicity-three cluster of the free operator).
    """
    E = sol.eigenvalues
    if len(E) < 3:
        raise ConfigError("need at least three bands to certify isolation")
    for b in range(len(E) - 1):
        scale = max(1.0, abs(0.5 * (E[b] + E[b + 1])))
        gap_tol = (DEGENERACY_RTOL if tol is None else tol) * scale
        if E[b + 1] - E[b] >= gap_tol:
            continue
        iso = ISOLATION_FACTOR * gap_tol
        below_ok = b == 0 or (E[b] - E[b - 1]) > iso
        above_ok = b + 2 < len(E) and (E[b + 2] - E[b + 1]) > iso
        if b + 2 >= len(E):
            raise ConfigError("band window too small to check isolation above the pair")
        if not (below_ok and above_ok):
            raise NotIsolatedError(
                f"pair at bands ({b + 1}, {b + 2}) is not isolated; "
                "possible multiplicity > 2")
        return b + 1, float(0.5 * (E[b] + E[b + 1]))
    raise NoDegeneracyError("no adjacent eigenvalue pair within tolerance at K")


def symmetry_classify(pair_vectors: np.ndarray, rot: RotationIndexMap,
                      tol: float = 1e-6):
    """Split a degenerate 2D eigenspace into rotation eigenvectors.

    ``pair_vectors`` holds the two orthonormal eigenvectors as columns.
    Diagonalizes the rotation restricted to the subspace; returns
    (phi1, phi2, eigvals) with phi1 in the tau eigenspace and phi2 its
    conjugate partner.
    """
    pair_vectors = np.asarray(pair_vectors)
    if pair_vectors.ndim != 2 or pair_vectors.shape[1] != 2:
        raise ConfigError("symmetry_classify needs a (size, 2) eigenvector pair")
    rotated = np.column_stack([rot.apply(pair_vectors[:, j]) for j in range(2)])
    M = pair_vectors.conj().T @ rotated
    evals, evecs = np.linalg.eig(M)
    order = np.argsort([abs(ev - TAU) for ev in evals])
    evals = evals[order]
    evecs = evecs[:, order]
    if abs(evals[0] - TAU) > tol or abs(evals[1] - np.conj(TAU)) > tol:
        raise RotationEigenvalueMismatchError(
            f"restricted rotation eigenvalues {evals.tolist()} are not the "
            "expected conjugate pair; not a Dirac pair or truncation too small")
    phi1 = pair_vectors @ evecs[:, 0]
    phi1 = phi1 / np.linalg.norm(phi1)
    phi2 = conjugate_partner(phi1)
    return phi1, phi2, evals


def conjugate_partner(phi1: np.ndarray) -> np.ndarray:
    """Coefficients of y -> conj(phi1(-y)): entrywise conjugation.

    The plane wave exp(i(K + m.k).y) maps to itself under this operation, so
    only the coefficients conjugate.
    """
    return np.conj(np.asarray(phi1))


def velocity_pairing(phi1: np.ndarray, phi2: np.ndarray, pw: PlaneWaveBasis,
                     sigma: float):
    """Complex pairing c = conj(<phi1, i p phi2>) . (1, i) and diagnostics."""
    p2 = apply_p_sigma(phi2, pw, sigma)
    vec = np.array([np.vdot(phi1, 1j * p2[0]), np.vdot(phi1, 1j * p2[1])])
    c = np.conj(vec[0]) + 1j * np.conj(vec[1])
    # symmetry forces the pairing vector parallel to (1, i)
    scale = max(abs(vec[0]), 1e-300)
    vector_residual = abs(vec[1] - 1j * vec[0]) / scale
    return c, vec, vector_residual


def gauge_fix(phi1: np.ndarray, phi2: np.ndarray, pw: PlaneWaveBasis,
              sigma: float):
    """Re-phase the pair so the velocity pairing is real positive.

    Multiplies phi1 by exp(-i arg(c)/2) and phi2 by the conjugate phase,
    preserving the conjugate-partner relation.  Returns
    (phi1, phi2, vF, raw_pairing, diagnostics) with vF = |c|/2 > 0.
    """
    c_raw, vec_raw, vres = velocity_pairing(phi1, phi2, pw, sigma)
    if abs(c_raw) < 1e-10:
        raise DegenerateVelocityError(
            f"velocity pairing magnitude {abs(c_raw):.3e} below 1e-10")
    phase = np.exp(-0.5j * np.angle(c_raw))
    phi1f = phase * phi1
    phi2f = np.conj(phase) * phi2
    c_fixed, _, _ = velocity_pairing(phi1f, phi2f, pw, sigma)
    vF = 0.5 * abs(c_raw)
    diagnostics = {
        "pairingVectorResidual": float(vres),
        "fixedPairingImag": float(abs(c_fixed.imag)),
        "fixedPairing": c_fixed,
    }
    return phi1f, phi2f, float(vF), c_raw, diagnostics


def apply_periodic_potential(coeffs: np.ndarray, pot: FourierPotential,
                             pw: PlaneWaveBasis) -> np.ndarray:
    """Convolution (pot * coeffs)(m) = sum_d pothat(d) c(m - d), truncated."""
    n = 2 * pw.N + 1
    grid = np.asarray(coeffs, complex).reshape(n, n)
    out = np.zeros_like(grid)
    for (d1, d2), v in pot.coeffs.items():
        src = grid[
            max(0, -d1): n - max(0, d1),
            max(0, -d2): n - max(0, d2),
        ]
        out[
            max(0, d1): n - max(0, -d1),
            max(0, d2): n - max(0, -d2),
        ] += v * src
    return out.ravel()


def mass_coefficient(phi1: np.ndarray, phi2: np.ndarray, W: FourierPotential,
                     pw: PlaneWaveBasis, tol: float = 1e-8):
    """Diagonal mass inner product theta = <phi1, W phi1> with structure report.

    Requires W real, odd, rotation-invariant.  Verifies the full 2x2 matrix
    structure diag(theta, -theta) and raises StructureViolationError beyond
    tolerance.
    """
    real_ok, _ = W.is_real()
    odd_ok, _ = W.is_odd()
    if not (real_ok and odd_ok):
        raise ConfigError("mass perturbation must be real and odd")
    Wphi1 = apply_periodic_potential(phi1, W, pw)
    Wphi2 = apply_periodic_potential(phi2, W, pw)
    M = np.array([
        [np.vdot(phi1, Wphi1), np.vdot(phi1, Wphi2)],
        [np.vdot(phi2, Wphi1), np.vdot(phi2, Wphi2)],
    ])
    theta = float(M[0, 0].real)
    residuals = {
        "diagImag": float(max(abs(M[0, 0].imag), abs(M[1, 1].imag))),
        "offDiagonal": float(max(abs(M[0, 1]), abs(M[1, 0]))),
        "antisymmetry": float(abs(M[1, 1] + M[0, 0])),
    }
    worst = max(residuals.values())
    if worst > tol:
        raise StructureViolationError(
            f"mass matrix structure residual {worst:.3e} exceeds {tol:.1e}: "
            f"{residuals}")
    return theta, {"matrix": M, "residuals": residuals}


def _padded(grid: np.ndarray, radius_out: int, radius_in: int) -> np.ndarray:
    pad = radius_out - radius_in
    return np.pad(grid, pad) if pad > 0 else grid


def cubic_coefficients(phi1: np.ndarray, phi2: np.ndarray, pw: PlaneWaveBasis,
                       cell_area: float, tol: float = 1e-8):
    """Quartic inner products and the two cubic interaction coefficients.

    Computes all sixteen <phi_i, conj(phi_j) phi_k phi_l> by zero-padded
    coefficient convolutions (exact for truncated series), then fits the
    symmetry-allowed structure; returns (b1, b2, tensor, report).
    """
    n = 2 * pw.N + 1
    grids = [np.asarray(p, complex).reshape(n, n) for p in (phi1, phi2)]
    r3 = 3 * pw.N

    def conjflip(g):
        return np.conj(g[::-1, ::-1])

    tensor = np.zeros((2, 2, 2, 2), dtype=complex)
    pair_products = {}
    for k in range(2):
        for l in range(2):
            pair_products[(k, l)] = fftconvolve(grids[k], grids[l])
    for i in range(2):
        lhs = _padded(grids[i], r3, pw.N)
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    triple = fftconvolve(conjflip(grids[j]), pair_products[(k, l)])
                    tensor[i, j, k, l] = np.vdot(lhs, triple) / cell_area

    # least-squares fit of (1/2)(b1 d_ij + b2 (1-d_ij)) (d_ik d_jl + d_il d_jk)
    rows, targets = [], []
    for i in range(2):
        for j in range(2):
            for k in range(2):
                for l in range(2):
                    sym = (i == k) * (j == l) + (i == l) * (j == k)
                    rows.append([0.5 * (i == j) * sym, 0.5 * (i != j) * sym])
                    targets.append(tensor[i, j, k, l])
    A = np.array(rows, float)
    t = np.array(targets)
    coef, *_ = np.linalg.lstsq(A, t.real, rcond=None)
    b1, b2 = float(coef[0]), float(coef[1])
    model = (A @ coef).astype(complex)
    resid = np.abs(t - model)
    forbidden = resid[(A == 0.0).all(axis=1)]
    report = {
        "fitResidualMax": float(resid.max()),
        "forbiddenMax": float(forbidden.max()) if len(forbidden) else 0.0,
        "imagMax": float(np.abs(t.imag).max()),
    }
    if report["fitResidualMax"] > tol:
        raise StructureViolationError(
            f"cubic tensor deviates from the allowed structure by "
            f"{report['fitResidualMax']:.3e} (> {tol:.1e})")
    return b1, b2, tensor, report


@dataclass(frozen=True)
class ConeFit:
    slope_plus: float
    slope_minus: float
    quadratic_residual: float
    direction_variation: float
    radii: np.ndarray
    n_directions: int

    def as_dict(self) -> dict:
        return {
            "slopePlus": self.slope_plus,
            "slopeMinus": self.slope_minus,
            "quadraticResidual": self.quadratic_residual,
            "directionVariation": self.direction_variation,
            "radii": self.radii.tolist(),
            "nDirections": self.n_directions,
        }


def cone_fit(kappas: np.ndarray, E_minus: np.ndarray, E_plus: np.ndarray,
             E_D: float) -> ConeFit:
    """Fit E_pm - E_D = pm v |kappa| (1 + e(kappa)) over an annulus.

    Least squares with a quadratic correction per branch; reports per-branch
    slopes, the relative size of the quadratic term, and the spread of
    per-direction slopes.
    """
    kappas = np.asarray(kappas, float)
    r = np.linalg.norm(kappas, axis=1)
    if np.any(r < 1e-12):
        raise ConfigError("cone fit requires kappa != 0")
    theta = np.round(np.arctan2(kappas[:, 1], kappas[:, 0]), 12)

    def branch_fit(y, rr):
        A = np.column_stack([rr, rr * rr])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ coef
        ss = float(np.sum(resid**2) / max(np.sum(y**2), 1e-300))
        return coef[0], coef[1], ss

    sp, qp, ssp = branch_fit(E_plus - E_D, r)
    sm, qm, ssm = branch_fit(-(E_minus - E_D), r)
    if sp <= 0 or sm <= 0 or max(ssp, ssm) > 1e-2:
        raise FitFailureError(
            f"non-conical band data: slopes ({sp:.3e}, {sm:.3e}), "
            f"relative misfit {max(ssp, ssm):.3e}")
    dir_slopes = []
    for th in np.unique(theta):
        sel = theta == th
        if sel.sum() < 2:
            continue
        s1, _, _ = branch_fit((E_plus - E_D)[sel], r[sel])
        s2, _, _ = branch_fit(-(E_minus - E_D)[sel], r[sel])
        dir_slopes.append(0.5 * (s1 + s2))
    dir_slopes = np.array(dir_slopes)
    variation = float((dir_slopes.max() - dir_slopes.min()) / dir_slopes.mean())
    quad = max(abs(qp / sp), abs(qm / sm))
    return ConeFit(
        slope_plus=float(sp), slope_minus=float(sm),
        quadratic_residual=float(quad), direction_variation=variation,
        radii=np.unique(np.round(r, 14)), n_directions=len(dir_slopes),
    )


def _pair_energies(basis, pw, pot, sigma, k, b_star):
    H = assemble_bloch_matrix(basis, pw, pot, k, sigma)
    sol = solve_bands(H, count=b_star + 1, eigenvectors=False)
    return sol.eigenvalues[b_star - 1], sol.eigenvalues[b_star]


def gap_opening(basis: LatticeBasis, pw: PlaneWaveBasis, pot: FourierPotential,
                W: FourierPotential, sigma: float, eps_list, b_star: int):
    """Gap at K for V + eps W over a list of eps, plus the fitted slope."""
    eps_list = np.asarray(list(eps_list), float)
    if np.any(np.diff(eps_list) <= 0) or np.any(eps_list < 0):
        raise ConfigError("eps list must be positive and increasing")
    gaps = []
    for eps in eps_list:
        lo, hi = _pair_energies(basis, pw, pot + W.scaled(float(eps)), sigma,
                                basis.K, b_star)
        gaps.append(hi - lo)
    gaps = np.array(gaps)
    A = np.column_stack([eps_list, np.ones_like(eps_list)])
    coef, *_ = np.linalg.lstsq(A, gaps, rcond=None)
    return {"eps": eps_list, "gap": gaps, "slope": float(coef[0]),
            "intercept": float(coef[1])}


def verify_eigenvector_expansion(basis: LatticeBasis, pw: PlaneWaveBasis,
                                 pot: FourierPotential, sigma: float,
                                 b_star: int, phi1: np.ndarray,
                                 phi2: np.ndarray, radii=None,
                                 n_directions: int = 4):
    """Check the first-order eigenvector form near K.

    Projects the numerical band eigenvectors onto (phi1, phi2) and compares
    the coefficient pair with ((kappa1 + i kappa2)/(sqrt2 |kappa|),
    s/sqrt2) up to a global phase, where s = +1 on the lower branch and -1
    on the upper one under the positive-pairing gauge (the roles of the two
    branches swap with the sign convention of the velocity pairing).
    Returns per-sample deviations and the fitted linear bound constant.
    """
    if radii is None:
        radii = np.array([1e-3, 3e-3, 1e-2, 3e-2, 5e-2])
    radii = np.asarray(radii, float)
    rows = []
    for r in radii:
        for j in range(n_directions):
            ang = 2.0 * np.pi * j / n_directions + 0.1
            kap = r * np.array([np.cos(ang), np.sin(ang)])
            H = assemble_bloch_matrix(basis, pw, pot, basis.K + kap, sigma)
            sol = solve_bands(H, count=b_star + 1)
            phase = (kap[0] + 1j * kap[1]) / r
            expected = {
                +1: np.array([phase, 1.0]) / np.sqrt(2.0),
                -1: np.array([phase, -1.0]) / np.sqrt(2.0),
            }
            dev_r = 0.0
            for sign, col in ((+1, b_star - 1), (-1, b_star)):
                vec = sol.eigenvectors[:, col]
                amp = np.array([np.vdot(phi1, vec), np.vdot(phi2, vec)])
                e = expected[sign]
                # optimal global phase alignment
                dev = np.sqrt(max(np.linalg.norm(amp) ** 2 + 1.0
                                  - 2.0 * abs(np.vdot(e, amp)), 0.0))
                dev_r = max(dev_r, dev)
            rows.append((r, dev_r))
    rows = np.array(rows)
    C = float(np.max(rows[:, 1] / rows[:, 0]))
    return {"radius": rows[:, 0], "deviation": rows[:, 1], "linearBound": C}


@dataclass(frozen=True)
class DiracPointData:
    """Gauge-fixed Dirac-point data consumed by the wave-dynamics modules."""

    sigma: float
    N: int
    E_D: float
    band_pair: tuple
    phi1: np.ndarray
    phi2: np.ndarray
    vF: float
    pairing_raw: complex
    theta: float
    b1: float
    b2: float
    mu_tensor: np.ndarray
    cone: ConeFit | None = None
    structure: dict = field(default_factory=dict)
    gap_table: dict | None = None

    def as_dict(self) -> dict:
        out = {
            "sigma": self.sigma,
            "N": self.N,
            "E_D": self.E_D,
            "bandPair": list(self.band_pair),
            "vF": self.vF,
            "pairingRaw": [self.pairing_raw.real, self.pairing_raw.imag],
            "theta": self.theta,
            "b1": self.b1,
            "b2": self.b2,
            "structureResiduals": self.structure,
        }
        if self.cone is not None:
            out["coneFit"] = self.cone.as_dict()
        if self.gap_table is not None:
            out["gapTable"] = {
                "eps": self.gap_table["eps"].tolist(),
                "gap": self.gap_table["gap"].tolist(),
                "slope": self.gap_table["slope"],
                "twoAbsTheta": 2.0 * abs(self.theta),
            }
        return out


def analyze_dirac_point(basis: LatticeBasis, pot: FourierPotential,
                        W: FourierPotential | None, sigma: float, N: int = 16,
                        with_cone: bool = True, gap_eps=None,
                        cone_radii=None, cone_directions: int = 8,
                        bands_window: int = 8) -> DiracPointData:
    """End-to-end Dirac-point analysis at K.

    Solves at K, classifies and gauge-fixes the pair, computes the velocity,
    mass and cubic coefficients, and optionally cross-validates the cone and
    tabulates gap opening under V + eps W.
    """
    pw = PlaneWaveBasis(basis, N)
    H = assemble_bloch_matrix(basis, pw, pot, basis.K, sigma)
    window = solve_bands(H, count=min(bands_window, pw.size))
    b_star, E_D = find_degenerate_pair(window)
    rot = rotation_index_map(basis, pw)
    pair = window.eigenvectors[:, b_star - 1: b_star + 1]
    phi1, phi2, _ = symmetry_classify(pair, rot)
    phi1, phi2, vF, c_raw, gauge_diag = gauge_fix(phi1, phi2, pw, sigma)

    structure = {"gauge": {k: v for k, v in gauge_diag.items() if k != "fixedPairing"}}
    theta = 0.0
    if W is not None and W.coeffs:
        theta, mass_rep = mass_coefficient(phi1, phi2, W, pw)
        structure["mass"] = mass_rep["residuals"]
    b1, b2, tensor, cubic_rep = cubic_coefficients(phi1, phi2, pw, basis.cell_area)
    structure["cubic"] = cubic_rep

    cone = None
    if with_cone:
        if cone_radii is None:
            cone_radii = np.geomspace(1e-3, 5e-2, 6)
        pw_cone = PlaneWaveBasis(basis, 12)
        kaps, lo, hi = [], [], []
        for r in cone_radii:
            for j in range(cone_directions):
                ang = 2.0 * np.pi * j / cone_directions + 0.05
                kap = r * np.array([np.cos(ang), np.sin(ang)])
                e_lo, e_hi = _pair_energies(basis, pw_cone, pot, sigma,
                                            basis.K + kap, b_star)
                kaps.append(kap)
                lo.append(e_lo)
                hi.append(e_hi)
        cone = cone_fit(np.array(kaps), np.array(lo), np.array(hi), E_D)

    gap_table = None
    if gap_eps is not None and W is not None:
        gap_table = gap_opening(basis, pw, pot, W, sigma, gap_eps, b_star)

    return DiracPointData(
        sigma=float(sigma), N=int(N), E_D=float(E_D),
        band_pair=(b_star, b_star + 1), phi1=phi1, phi2=phi2, vF=vF,
        pairing_raw=complex(c_raw), theta=theta, b1=b1, b2=b2,
        mu_tensor=tensor, cone=cone, structure=structure, gap_table=gap_table,
    )
