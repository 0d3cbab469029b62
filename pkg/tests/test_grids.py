import numpy as np
import pytest

from fracbloch.errors import ConfigError, GridError
from fracbloch.grids import (BoxGrid, Field2D, box_spectrum, box_synthesis,
                             micro_profile_on_grid, parseval_l2,
                             potential_on_grid, spectral_derivative, upsample,
                             weighted_hs_norm)
from fracbloch.lattice import PlaneWaveBasis


def test_grid_geometry(basis):
    g = BoxGrid(basis, cells=8, points_per_cell=4, epsilon=0.1)
    assert g.npts == 32
    assert abs(g.box_area - (0.8**2) * basis.cell_area) < 1e-15
    assert abs(g.sample_area * g.npts**2 - g.box_area) < 1e-15

    with pytest.raises(GridError):
        BoxGrid(basis, cells=0, points_per_cell=4, epsilon=0.1)
    with pytest.raises(ConfigError):
        BoxGrid(basis, cells=8, points_per_cell=4, epsilon=1.5)


def test_field_shape_validation(basis):
    g = BoxGrid(basis, 4, 4, 0.1)
    with pytest.raises(GridError):
        Field2D(grid=g, values=np.zeros((3, 3), complex))


def test_parseval(basis, rng):
    g = BoxGrid(basis, 8, 4, 0.2)
    f = Field2D(grid=g, values=rng.normal(size=g.shape)
                + 1j * rng.normal(size=g.shape))
    assert abs(parseval_l2(f) - f.l2_norm()) < 1e-10 * f.l2_norm()


def test_weighted_norm_orders(basis):
    g = BoxGrid(basis, 8, 4, 0.1)
    xi = g.xi_grid()[2, 5]
    x = g.x_coords()
    f = Field2D(grid=g, values=np.exp(1j * (x @ xi)))
    root_area = np.sqrt(g.box_area)

    # s = 0 reduces to the plain L2 norm
    assert abs(weighted_hs_norm(f, 0) - f.l2_norm()) < 1e-12

    # single mode, s = 1: sqrt(1 + |eps xi|^2) times the L2 norm
    expect = np.sqrt(1 + 0.1**2 * (xi @ xi)) * root_area
    assert abs(weighted_hs_norm(f, 1) - expect) < 1e-10

    # s = 2 includes all second-order multi-indices
    e2 = (0.1 * xi[0]) ** 2, (0.1 * xi[1]) ** 2
    w2 = 1 + e2[0] + e2[1] + e2[0] ** 2 + e2[0] * e2[1] + e2[1] ** 2
    assert abs(weighted_hs_norm(f, 2) - np.sqrt(w2) * root_area) < 1e-10

    with pytest.raises(ConfigError):
        weighted_hs_norm(f, 4)


def test_weighted_norm_rescaling_identity(basis):
    # || f ||_{H^s_eps} equals || eps f(eps y) ||_{H^s} exactly
    eps = 0.07
    g = BoxGrid(basis, 12, 4, eps)
    x = g.x_coords()
    c = g.box_center()
    vals = np.exp(-np.sum((x - c) ** 2, axis=-1) / (2 * 0.12**2)).astype(complex)
    f = Field2D(grid=g, values=vals)
    lhs = weighted_hs_norm(f, 2)

    gy = BoxGrid(basis, 12, 4, 1.0)  # same fractions: y = x / eps
    fy = Field2D(grid=gy, values=vals)
    rhs = eps * weighted_hs_norm(fy, 2, epsilon=1.0)
    assert abs(lhs - rhs) < 1e-8 * max(lhs, 1e-30)


def test_weighted_norm_with_carrier(basis):
    # carrier momentum participates in the derivative multipliers
    g = BoxGrid(basis, 8, 4, 0.1)
    carrier = basis.K / g.epsilon
    f = Field2D(grid=g, values=np.ones(g.shape, complex), carrier=carrier)
    expect = np.sqrt(1 + np.linalg.norm(basis.K) ** 2) * np.sqrt(g.box_area)
    assert abs(weighted_hs_norm(f, 1) - expect) < 1e-10


def test_upsample_band_limited(basis, rng):
    src = BoxGrid(basis, 8, 2, 0.1)
    dst = BoxGrid(basis, 8, 6, 0.1)
    spec = np.zeros(src.shape, complex)
    spec[:5, :5] = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    vals = box_synthesis(spec)
    up = upsample(vals, src, dst)
    # the upsampled field agrees with direct evaluation of the same modes
    xd = dst.x_coords()
    direct = np.zeros(dst.shape, complex)
    N1, N2 = src.mode_indices()
    for i in range(src.npts):
        for j in range(src.npts):
            if spec[i, j] != 0:
                xi = (N1[i, j] * basis.k1 + N2[i, j] * basis.k2) / (0.1 * 8)
                direct += spec[i, j] * np.exp(1j * (xd @ xi))
    assert np.abs(up - direct).max() < 1e-9

    with pytest.raises(GridError):
        upsample(vals, src, BoxGrid(basis, 8, 1, 0.1))
    with pytest.raises(GridError):
        upsample(vals, src, BoxGrid(basis, 4, 6, 0.1))


def test_spectral_derivative(basis):
    g = BoxGrid(basis, 8, 4, 0.1)
    xi = g.xi_grid()[3, 2]
    x = g.x_coords()
    f = np.exp(1j * (x @ xi))
    d0 = spectral_derivative(f, g, 0)
    assert np.abs(d0 - 1j * xi[0] * f).max() < 1e-9 * abs(xi[0])


def test_micro_profile_single_mode(basis):
    pw = PlaneWaveBasis(basis, 4)
    g = BoxGrid(basis, 6, 12, 0.1)
    c = np.zeros(pw.size, complex)
    c[pw.flat_index(np.array([1, -2]))] = 1.0
    vals = micro_profile_on_grid(c, pw, g)
    S1, S2 = g.fractions()
    expect = np.exp(2j * np.pi * (S1 - 2 * S2)) / np.sqrt(basis.cell_area)
    assert np.abs(vals - expect).max() < 1e-10


def test_potential_on_grid(basis, V):
    g = BoxGrid(basis, 4, 8, 0.1)
    vals = potential_on_grid(V, g)
    assert abs(vals[0, 0] - 6.0) < 1e-12
    assert abs(vals.mean()) < 1e-12
    # exactly periodic per cell
    n = g.points_per_cell
    assert np.abs(vals[:n, :n] - vals[n:2 * n, n:2 * n]).max() < 1e-12
