import dataclasses

import numpy as np
import pytest
import scipy.linalg

import fracbloch as fb
from fracbloch.dynamics import (EnvelopeState, SimConfig, approximation_error,
                                build_micro_profiles, corrector_coefficients,
                                corrector_field, evolve_dirac, evolve_fnls,
                                gaussian_envelopes, product_rule_check,
                                synthesize_wavepacket)
from fracbloch.errors import NyquistError
from fracbloch.grids import BoxGrid, Field2D
from fracbloch.potential import Modulation, zero_potential


@pytest.fixture(scope="module")
def small_cfg():
    return SimConfig(sigma=2.0, epsilon=0.1, mu=1, cells=24,
                     points_per_cell=6, envelope_points_per_cell=2,
                     dt=2e-4, dt_envelope=5e-4, T=0.1, s=1,
                     amp1=1.0, amp2=0.0, width=0.28, N=16)


@pytest.fixture(scope="module")
def setup(basis, V, W, dirac_cache, small_cfg):
    d = dirac_cache(2.0)
    fine = small_cfg.fine_grid(basis)
    coarse = small_cfg.envelope_grid(basis)
    profiles = build_micro_profiles(basis, d, fine)
    env0 = gaussian_envelopes(coarse, small_cfg.amp1, small_cfg.amp2,
                              small_cfg.width)
    return d, fine, coarse, profiles, env0


def test_zero_envelopes_give_zero_field(basis, setup):
    d, fine, coarse, profiles, _ = setup
    env = EnvelopeState(grid=coarse, alpha1=np.zeros(coarse.shape, complex),
                        alpha2=np.zeros(coarse.shape, complex))
    psi = synthesize_wavepacket(env, profiles)
    assert np.abs(psi.values).max() == 0.0


def test_homogenized_norm(basis, V, W, dirac_cache):
    # || psi || -> || alpha1 || * ||Phi1|| / sqrt(cell area) as eps -> 0
    d = dirac_cache(2.0)
    cfg = SimConfig(epsilon=0.05, cells=48, points_per_cell=6,
                    envelope_points_per_cell=2, width=0.28)
    fine = cfg.fine_grid(basis)
    profiles = build_micro_profiles(basis, d, fine)
    env = gaussian_envelopes(cfg.envelope_grid(basis), 1.0, 0.0, cfg.width)
    psi = synthesize_wavepacket(env, profiles)
    alpha_l2 = np.sqrt(env.charge())
    expect = alpha_l2 / np.sqrt(basis.cell_area)
    assert abs(psi.l2_norm() - expect) / expect < 0.01


def test_corrected_minus_leading_scales_with_eps(basis, V, W, dirac_cache):
    d = dirac_cache(2.0)
    corr = corrector_coefficients(basis, V, W, d)
    diffs = {}
    for eps, cells in ((0.1, 24), (0.05, 48)):
        cfg = SimConfig(epsilon=eps, cells=cells, points_per_cell=6,
                        envelope_points_per_cell=2, width=0.28, mu=1)
        fine = cfg.fine_grid(basis)
        profiles = build_micro_profiles(basis, d, fine, corr)
        env = gaussian_envelopes(cfg.envelope_grid(basis), 1.0, 0.0, cfg.width)
        kap = np.ones(fine.shape)
        lead = synthesize_wavepacket(env, profiles)
        corrd = synthesize_wavepacket(env, profiles, order="corrected",
                                      kappa_fine=kap, mu=1)
        diffs[eps] = Field2D(grid=fine, values=corrd.values - lead.values,
                             carrier=lead.carrier).l2_norm()
    ratio = diffs[0.1] / diffs[0.05]
    assert 1.6 < ratio < 2.4


def test_corrector_vanishes_for_constant_envelope(basis, V, W, dirac_cache,
                                                  small_cfg):
    d = dirac_cache(2.0)
    corr = corrector_coefficients(basis, V, W, d)
    fine = small_cfg.fine_grid(basis)
    coarse = small_cfg.envelope_grid(basis)
    profiles = build_micro_profiles(basis, d, fine, corr)
    env = EnvelopeState(grid=coarse,
                        alpha1=np.full(coarse.shape, 0.7 + 0.1j),
                        alpha2=np.full(coarse.shape, 0.0j))
    u1 = corrector_field(env, profiles, np.zeros(fine.shape), mu=0)
    assert np.abs(u1).max() < 1e-10


def test_corrector_profiles_contracts(basis, V, W, dirac_cache, pw16):
    # each resolvent profile is orthogonal to the pair and solves
    # (H - E_D) u = P_perp(rhs)
    d = dirac_cache(2.0)
    corr = corrector_coefficients(basis, V, W, d)
    H = fb.assemble_bloch_matrix(basis, pw16, V, basis.K, 2.0).matrix

    from fracbloch.bloch import apply_p_sigma
    from fracbloch.dirac import apply_periodic_potential

    rhs_list = [apply_p_sigma(d.phi1, pw16, 2.0)[0],
                apply_p_sigma(d.phi2, pw16, 2.0)[1],
                apply_periodic_potential(d.phi1, W, pw16)]
    prof_list = [corr.P[0][0], corr.P[1][1], corr.Q[0]]
    for rhs, prof in zip(rhs_list, prof_list):
        assert abs(np.vdot(d.phi1, prof)) < 1e-9
        assert abs(np.vdot(d.phi2, prof)) < 1e-9
        Pf = rhs - d.phi1 * np.vdot(d.phi1, rhs) - d.phi2 * np.vdot(d.phi2, rhs)
        res = np.linalg.norm(H @ prof - d.E_D * prof - Pf)
        assert res < 1e-8 * max(1.0, np.linalg.norm(rhs))


def test_nyquist_guard(basis, dirac_cache):
    d = dirac_cache(2.0)
    cfg = SimConfig(epsilon=0.1, cells=8, points_per_cell=6,
                    envelope_points_per_cell=2, width=0.05)
    fine = cfg.fine_grid(basis)
    profiles = build_micro_profiles(basis, d, fine)
    env = gaussian_envelopes(cfg.envelope_grid(basis), 1.0, 0.0, cfg.width)
    with pytest.raises(NyquistError):
        synthesize_wavepacket(env, profiles)


def test_fnls_single_mode_exact_phase(basis):
    g = BoxGrid(basis, 12, 4, 0.1)
    xi = g.xi_grid()[2, 3]
    x = g.x_coords()
    psi0 = Field2D(grid=g, values=np.exp(1j * (x @ xi)).astype(complex))
    cfg = SimConfig(sigma=1.6, epsilon=0.1, mu=0, cells=12, points_per_cell=4,
                    dt=1e-3, T=0.3)
    frames, info = evolve_fnls(psi0, zero_potential(), None, None, cfg, [0.3])
    exact = psi0.values * np.exp(-1j * 0.3 * np.linalg.norm(0.1 * xi) ** 1.6 / 0.1)
    assert np.abs(frames[-1].values - exact).max() < 1e-10
    assert info["massDrift"] < 1e-12


def test_fnls_mass_conservation(basis, V, W, setup, small_cfg):
    d, fine, coarse, profiles, env0 = setup
    kap = np.ones(fine.shape) * 0.5
    psi0 = synthesize_wavepacket(env0, profiles)
    for mu in (1, -1):
        cfg = dataclasses.replace(small_cfg, mu=mu, T=0.1)
        _, info = evolve_fnls(psi0, V, W, kap, cfg, [0.1])
        assert info["massDrift"] < 1e-10


def test_fnls_self_convergence(basis, V, W, setup, small_cfg):
    # Strang splitting: halving dt shrinks the error by about 4
    d, fine, coarse, profiles, env0 = setup
    psi0 = synthesize_wavepacket(env0, profiles)
    kap = np.ones(fine.shape)
    outs = {}
    for dt in (4e-4, 2e-4, 2.5e-5):
        cfg = dataclasses.replace(small_cfg, dt=dt, T=0.04, mu=1)
        frames, _ = evolve_fnls(psi0, V, W, kap, cfg, [0.04])
        outs[dt] = frames[-1].values
    e1 = np.linalg.norm(outs[4e-4] - outs[2.5e-5])
    e2 = np.linalg.norm(outs[2e-4] - outs[2.5e-5])
    assert 3.2 < e1 / e2 < 4.8


def test_fnls_time_reversal(basis, V, setup, small_cfg):
    d, fine, coarse, profiles, env0 = setup
    psi0 = synthesize_wavepacket(env0, profiles)
    cfg = dataclasses.replace(small_cfg, mu=0, T=0.05)
    frames, _ = evolve_fnls(psi0, V, None, None, cfg, [0.05])
    # integrate back to t = 0; the exact sub-flows reverse cleanly
    frames2, _ = evolve_fnls(frames[-1], V, None, None, cfg, [0.0])
    err = np.abs(frames2[-1].values - psi0.values).max()
    assert err < 1e-8


def test_dirac_transport_matches_matrix_exponential(basis, dirac_cache):
    d = dirac_cache(2.0)
    g = BoxGrid(basis, 16, 4, 0.1)
    xi = g.xi_grid()[1, 2]
    x = g.x_coords()
    mode = np.exp(1j * (x @ xi))
    a10, a20 = 0.7 + 0.2j, -0.3 + 0.5j
    env0 = EnvelopeState(grid=g, alpha1=a10 * mode, alpha2=a20 * mode)
    cfg = SimConfig(mu=0, cells=16, envelope_points_per_cell=4,
                    dt_envelope=5e-4, T=0.4)
    frames, info = evolve_dirac(env0, d, None, cfg, [0.4])
    v_eff = -d.vF
    B = np.array([[0, -v_eff * (1j * xi[0] - xi[1])],
                  [-v_eff * (1j * xi[0] + xi[1]), 0]])
    aT = scipy.linalg.expm(0.4 * B) @ np.array([a10, a20])
    assert np.abs(frames[-1].alpha1 - aT[0] * mode).max() < 1e-8
    assert np.abs(frames[-1].alpha2 - aT[1] * mode).max() < 1e-8
    assert info["chargeDrift"] < 1e-12


def test_dirac_transport_couples_components(basis, dirac_cache):
    d = dirac_cache(2.0)
    g = BoxGrid(basis, 16, 4, 0.1)
    env0 = gaussian_envelopes(g, 1.0, 0.0, 0.25)
    cfg = SimConfig(mu=0, cells=16, envelope_points_per_cell=4,
                    dt_envelope=5e-4, T=0.05)
    frames, _ = evolve_dirac(env0, d, None, cfg, [0.05])
    a2 = np.linalg.norm(frames[-1].alpha2) * np.sqrt(g.sample_area)
    assert a2 > 1e-3


def test_dirac_constant_envelope_exact(basis, dirac_cache):
    d = dirac_cache(2.0)
    g = BoxGrid(basis, 16, 4, 0.1)
    env0 = EnvelopeState(grid=g,
                         alpha1=np.full(g.shape, 0.5 + 0.1j),
                         alpha2=np.full(g.shape, 0.2 - 0.3j))
    kap = np.full(g.shape, 0.8)
    cfg = SimConfig(mu=0, cells=16, envelope_points_per_cell=4,
                    dt_envelope=5e-4, T=0.4)
    frames, _ = evolve_dirac(env0, d, kap, cfg, [0.4])
    ph = np.exp(-1j * 0.4 * d.theta * 0.8)
    assert np.abs(frames[-1].alpha1 - (0.5 + 0.1j) * ph).max() < 1e-8
    assert np.abs(frames[-1].alpha2 - (0.2 - 0.3j) / ph).max() < 1e-8


def test_dirac_charge_conservation(basis, dirac_cache):
    d = dirac_cache(2.0)
    g = BoxGrid(basis, 16, 4, 0.1)
    env0 = gaussian_envelopes(g, 0.9, 0.3j, 0.25)
    kapg = Modulation(kind="gaussian", amplitude=1.0, width=1.0)
    kap = kapg.evaluate(g.x_coords(), origin=g.box_center())
    for mu in (1, -1):
        cfg = SimConfig(mu=mu, cells=16, envelope_points_per_cell=4,
                        dt_envelope=1e-3, T=1.0)
        _, info = evolve_dirac(env0, d, kap, cfg, [1.0])
        assert info["chargeDrift"] < 1e-6


def test_approximation_error_zero_at_t0(basis, setup):
    d, fine, coarse, profiles, env0 = setup
    psi0 = synthesize_wavepacket(env0, profiles)
    err = approximation_error(psi0, env0, profiles, order="leading", s=1)
    assert err < 1e-12


def test_approximation_error_gauge_covariance(basis, setup, rng):
    d, fine, coarse, profiles, env0 = setup
    psi0 = synthesize_wavepacket(env0, profiles)
    # re-phase the pair and compensate the envelopes: error must not move
    th = rng.uniform(0, 2 * np.pi)
    d2 = dataclasses.replace(d, phi1=np.exp(1j * th) * d.phi1,
                             phi2=np.exp(-1j * th) * d.phi2)
    profiles2 = build_micro_profiles(basis, d2, fine)
    env2 = EnvelopeState(grid=coarse,
                         alpha1=np.exp(-1j * th) * env0.alpha1,
                         alpha2=np.exp(1j * th) * env0.alpha2)
    e1 = approximation_error(psi0, env0, profiles, order="leading", s=1)
    e2 = approximation_error(psi0, env2, profiles2, order="leading", s=1)
    assert abs(e1 - e2) < 1e-10


def test_product_rule_classical_limit(basis, dirac_cache, pw16):
    # the Gaussian must be spectrally confined on the box (seam below
    # roundoff), or the full-band multiplier amplifies the wrap kink
    d = dirac_cache(2.0)
    grid = BoxGrid(basis, 48, 6, 0.1)
    out = product_rule_check(basis, d.phi1, pw16, grid, 2.0, s=1, width=0.28)
    assert out["leibnizResidual"] < 1e-9


def test_product_rule_eps_ratio(basis, pw16):
    d = fb.analyze_dirac_point(fb.make_honeycomb_basis(), fb.builtin_V(),
                               None, 1.6, N=16, with_cone=False)
    norms = {}
    for eps, cells in ((0.1, 48), (0.05, 96)):
        grid = BoxGrid(basis, cells, 6, eps)
        norms[eps] = product_rule_check(basis, d.phi1, pw16, grid, 1.6,
                                        s=1, width=0.32)["qNorm"]
    ratio = norms[0.1] / norms[0.05]
    assert 3.2 < ratio < 4.8


@pytest.mark.slow
def test_linear_convergence_sanity(basis, V, W):
    # mu = 0, kappa = 0 special case of the envelope-approximation study
    from fracbloch.dynamics import convergence_study
    d = fb.analyze_dirac_point(basis, V, W, sigma=1.6, N=16, with_cone=False)
    cfg = SimConfig(sigma=1.6, epsilon=0.1, mu=0, cells=96, points_per_cell=6,
                    envelope_points_per_cell=2, dt=1e-3, dt_envelope=5e-4,
                    T=0.5, s=1, order="leading", amp1=1.0, amp2=0.0,
                    width=1.1, N=16)
    rep = convergence_study(basis, V, None, None, d, cfg, [0.2, 0.1])
    assert rep["fittedRate"] >= 0.8


@pytest.mark.slow
def test_grid_refinement_stability(basis, V, W, dirac_cache):
    # doubling the micro resolution moves the measured error by < 1%
    d = dirac_cache(2.0)
    from fracbloch.dynamics import run_two_scale_case
    errs = {}
    for n in (6, 12):
        cfg = SimConfig(sigma=2.0, epsilon=0.1, mu=1, cells=24,
                        points_per_cell=n, envelope_points_per_cell=2,
                        dt=2.5e-4, dt_envelope=5e-4, T=0.1, s=1,
                        amp1=1.0, amp2=0.0, width=0.28, N=16)
        r = run_two_scale_case(basis, V, W,
                               Modulation(kind="gaussian", amplitude=1.0,
                                          width=1.0), d, cfg)
        errs[n] = r["error"]
    assert abs(errs[6] - errs[12]) / errs[12] < 0.01


def test_product_rule_constant_envelope(basis, dirac_cache, pw16):
    # a constant envelope annihilates grad(Gamma) and the residual exactly
    d = dirac_cache(2.0)
    grid = BoxGrid(basis, 24, 6, 0.1)
    flat = product_rule_check(basis, d.phi1, pw16, grid, 1.7, s=0,
                              width=float("inf"))
    narrow = product_rule_check(basis, d.phi1, pw16, grid, 1.7, s=0, width=0.3)
    assert flat["qNorm"] < 1e-9 * max(narrow["qNorm"], 1.0)
