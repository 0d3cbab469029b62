"""Honeycomb lattice geometry.

Direct and dual bases, the high-symmetry quasimomenta, the 2*pi/3 clockwise
rotation, and its induced permutation of plane-wave indices.  Everything is
derived at construction time from the two direct vectors; nothing else is
hard-coded, so the duality and rotation invariants are testable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError

__all__ = [
    "LatticeBasis",
    "PlaneWaveBasis",
    "RotationIndexMap",
    "make_honeycomb_basis",
    "rotation_index_map",
    "dual_rotation_index",
    "k_path",
]


@dataclass(frozen=True)
class LatticeBasis:
    """Honeycomb direct/dual vectors plus rotation data.

    All arrays are immutable after construction; instances are safe to share
    across threads.
    """

    v1: np.ndarray
    v2: np.ndarray
    k1: np.ndarray
    k2: np.ndarray
    K: np.ndarray
    Kprime: np.ndarray
    R: np.ndarray
    cell_area: float

    def __post_init__(self):
        for name in ("v1", "v2", "k1", "k2", "K", "Kprime", "R"):
            getattr(self, name).setflags(write=False)

    @property
    def dual_matrix(self) -> np.ndarray:
        """Columns are k1, k2; maps integer index pairs to dual vectors."""
        return np.column_stack([self.k1, self.k2])

    def dual_coords(self, q: np.ndarray) -> np.ndarray:
        """Coordinates of q (last axis = 2) in the (k1, k2) basis."""
        return np.linalg.solve(self.dual_matrix, np.asarray(q, float).T).T


def make_honeycomb_basis() -> LatticeBasis:
    """Build the standard honeycomb geometry.

    v1 = (sqrt3/2, 1/2), v2 = (sqrt3/2, -1/2); the dual vectors solve
    v_i . k_j = 2*pi*delta_ij, K = (k1 - k2)/3 and K' = -K.
    """
    v1 = np.array([np.sqrt(3.0) / 2.0, 0.5])
    v2 = np.array([np.sqrt(3.0) / 2.0, -0.5])
    V = np.vstack([v1, v2])
    dual = 2.0 * np.pi * np.linalg.inv(V)  # columns k1, k2
    k1, k2 = dual[:, 0].copy(), dual[:, 1].copy()
    K = (k1 - k2) / 3.0
    # 2*pi/3 clockwise rotation
    c, s = -0.5, np.sqrt(3.0) / 2.0
    R = np.array([[c, s], [-s, c]])
    basis = LatticeBasis(
        v1=v1, v2=v2, k1=k1, k2=k2, K=K, Kprime=-K, R=R,
        cell_area=float(abs(np.linalg.det(V))),
    )
    _verify_basis(basis)
    return basis


def _verify_basis(basis: LatticeBasis, tol: float = 1e-12) -> None:
    V = np.vstack([basis.v1, basis.v2])
    err = np.abs(V @ basis.dual_matrix - 2.0 * np.pi * np.eye(2)).max()
    if err > tol:
        raise GeometryError(f"duality residual {err:.3e} exceeds {tol:.1e}")
    if np.abs(basis.R @ basis.R @ basis.R - np.eye(2)).max() > tol:
        raise GeometryError("rotation is not of order three")
    # R K - K and R* K - K must both be dual-lattice vectors
    for M in (basis.R, basis.R.T):
        coords = basis.dual_coords(M @ basis.K - basis.K)
        if np.abs(coords - np.rint(coords)).max() > 1e-9:
            raise GeometryError("rotated K does not shift by a dual-lattice vector")


@dataclass(frozen=True)
class PlaneWaveBasis:
    """Square truncation |m1|, |m2| <= N of the plane-wave expansion.

    The index list is row-major in (m1, m2): m1 is the slow axis.  This fixed
    ordering defines the matrix layout everywhere downstream.
    """

    basis: LatticeBasis
    N: int
    center: np.ndarray = field(default=None)  # quasimomentum, defaults to K

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("truncation N must be >= 1")
        center = self.basis.K.copy() if self.center is None else np.asarray(self.center, float).copy()
        object.__setattr__(self, "center", center)
        self.center.setflags(write=False)

    @property
    def size(self) -> int:
        return (2 * self.N + 1) ** 2

    @property
    def index_list(self) -> np.ndarray:
        """(size, 2) integer array of (m1, m2), row-major."""
        r = np.arange(-self.N, self.N + 1)
        m1, m2 = np.meshgrid(r, r, indexing="ij")
        return np.column_stack([m1.ravel(), m2.ravel()])

    def flat_index(self, m: np.ndarray) -> np.ndarray:
        """Flat position of index pairs m (…, 2) in the row-major list."""
        m = np.asarray(m)
        return (m[..., 0] + self.N) * (2 * self.N + 1) + (m[..., 1] + self.N)

    def in_range(self, m: np.ndarray) -> np.ndarray:
        m = np.asarray(m)
        return (np.abs(m[..., 0]) <= self.N) & (np.abs(m[..., 1]) <= self.N)

    def momenta(self, k: np.ndarray | None = None) -> np.ndarray:
        """(size, 2) array of k + m1*k1 + m2*k2 (k defaults to the center)."""
        if k is None:
            k = self.center
        return np.asarray(k, float)[None, :] + self.index_list @ np.vstack(
            [self.basis.k1, self.basis.k2]
        )


@dataclass(frozen=True)
class RotationIndexMap:
    """Permutation induced by the rotation on plane-wave indices.

    ``perm[i]`` is the flat index j such that the rotated function's
    coefficient at slot i is the original coefficient at slot j; dropped
    slots (image outside the truncation) carry ``perm[i] == -1`` and are
    treated as zero by :meth:`apply`.
    """

    perm: np.ndarray
    dropped: np.ndarray

    def __post_init__(self):
        self.perm.setflags(write=False)
        self.dropped.setflags(write=False)

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        """Coefficients of the rotated function (zeros on the drop-set)."""
        out = np.zeros_like(coeffs)
        keep = ~self.dropped
        out[keep] = coeffs[self.perm[keep]]
        return out


def rotation_index_map(basis: LatticeBasis, pw: PlaneWaveBasis) -> RotationIndexMap:
    """Index permutation with drop-set for the K-centred basis.

    Solves R*(K + m.k) = K + m'.k for every m; entries whose m' leaves the
    truncation form the drop-set.
    """
    if np.abs(pw.center - basis.K).max() > 1e-12:
        raise GeometryError("rotation map requires a K-centred plane-wave basis")
    q = pw.momenta() @ basis.R  # row-vector form of R^T q
    coords = basis.dual_coords(q - basis.K[None, :])
    mprime = np.rint(coords).astype(int)
    if np.abs(coords - mprime).max() > 1e-9:
        raise GeometryError("rotated momenta do not land on the dual lattice")
    inside = pw.in_range(mprime)
    perm = np.full(pw.size, -1, dtype=int)
    perm[inside] = pw.flat_index(mprime[inside])
    return RotationIndexMap(perm=perm, dropped=~inside)


def dual_rotation_index(basis: LatticeBasis, m: np.ndarray) -> np.ndarray:
    """Rotation-induced map on plain dual-lattice indices (no K offset).

    Returns m' with R*(m.k) = m'.k, used for rotation-invariance checks of
    periodic potentials.
    """
    m = np.atleast_2d(np.asarray(m, int))
    q = (m @ np.vstack([basis.k1, basis.k2])) @ basis.R
    coords = basis.dual_coords(q)
    mprime = np.rint(coords).astype(int)
    if np.abs(coords - mprime).max() > 1e-9:
        raise GeometryError("dual index rotation left the lattice")
    return mprime


def k_path(a: np.ndarray, b: np.ndarray, n: int) -> np.ndarray:
    """n quasimomenta linearly interpolating a -> b inclusive."""
    if n < 2:
        raise ValueError("k_path needs n >= 2")
    t = np.linspace(0.0, 1.0, n)
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    return a[None, :] + t[:, None] * (b - a)[None, :]
