"""Experiment drivers: orchestrate the library modules and emit files.

Each driver takes a resolved config, an output directory, and a thread
count, and writes its outputs plus the resolved config into the directory.
"""

from __future__ import annotations

import os

import numpy as np

from .bloch import assemble_bloch_matrix, band_sweep, solve_bands
from .config import build_modulation, build_potential, write_resolved_config
from .dirac import analyze_dirac_point
from .dynamics import (SimConfig, convergence_study, evolve_fnls,
                       build_micro_profiles, gaussian_envelopes,
                       run_two_scale_case, product_rule_check,
                       synthesize_wavepacket)
from .errors import ConfigError
from .grids import BoxGrid
from .io import (ensure_outdir, write_band_csv, write_field_snapshot,
                 write_json)
from .lattice import PlaneWaveBasis, k_path, make_honeycomb_basis

__all__ = ["run_experiment"]


def _sigma_tag(sigma: float) -> str:
    return format(float(sigma), "g").replace(".", "p")


def _band_potential(cfg: dict):
    pot = build_potential(cfg["potential"], "potential")
    strength = cfg["perturbation"]["strength"]
    if strength:
        pot = pot + build_potential(cfg["perturbation"], "perturbation").scaled(strength)
    return pot


def run_bands(cfg: dict, outdir: str, threads: int) -> dict:
    basis = make_honeycomb_basis()
    section = cfg["bands"]
    pot = _band_potential(cfg)
    pw = PlaneWaveBasis(basis, section["N"])
    sigmas = section["sigmas"] or [cfg["operator"]["sigma"]]

    if section["mode"] == "path":
        lam0, lam1 = section["lambda_range"]
        a = basis.K + lam0 * basis.k2
        b = basis.K + lam1 * basis.k2
        k_list = k_path(a, b, section["npoints"])
    else:
        r = section["radius"]
        g = section["grid_points"]
        if g % 2 == 0:
            raise ConfigError("[bands] grid_points must be odd so the grid contains K")
        offs = np.linspace(-r, r, g)
        k_list = np.array([basis.K + np.array([u, v])
                           for u in offs for v in offs])

    files = []
    for sigma in sigmas:
        energies = band_sweep(basis, pw, pot, float(sigma), k_list,
                              section["count"], threads=threads)
        name = f"bands_sigma{_sigma_tag(sigma)}.csv"
        write_band_csv(os.path.join(outdir, name), k_list, energies)
        files.append(name)
    meta = {
        "mode": section["mode"],
        "sigmas": [float(s) for s in sigmas],
        "N": section["N"],
        "count": section["count"],
        "potential": pot.name,
        "files": files,
    }
    if section["mode"] == "path":
        meta["lambdaRange"] = section["lambda_range"]
        meta["pathDirection"] = "k2"
    else:
        meta["radius"] = section["radius"]
        meta["gridPoints"] = section["grid_points"]
    write_json(os.path.join(outdir, "bands_meta.json"), meta)
    return meta


def run_dirac(cfg: dict, outdir: str, threads: int) -> dict:
    basis = make_honeycomb_basis()
    pot = build_potential(cfg["potential"], "potential")
    W = build_potential(cfg["perturbation"], "perturbation")
    section = cfg["dirac"]
    data = analyze_dirac_point(
        basis, pot, W, cfg["operator"]["sigma"], N=section["N"],
        with_cone=section["cone"], gap_eps=section["gap_eps"] or None,
        cone_directions=section["cone_directions"],
    )
    report = data.as_dict()
    report["potential"] = pot.name
    report["perturbation"] = W.name
    write_json(os.path.join(outdir, "dirac.json"), report)
    return report


def run_evolve(cfg: dict, outdir: str, threads: int) -> dict:
    basis = make_honeycomb_basis()
    pot = build_potential(cfg["potential"], "potential")
    W = build_potential(cfg["perturbation"], "perturbation")
    kappa = build_modulation(cfg["modulation"])
    dyn = cfg["dynamics"]
    sim = SimConfig(
        sigma=cfg["operator"]["sigma"], epsilon=dyn["epsilon"], mu=dyn["mu"],
        cells=dyn["cells"], points_per_cell=dyn["points_per_cell"],
        envelope_points_per_cell=dyn["envelope_points_per_cell"],
        dt=dyn["dt"], dt_envelope=dyn["dt_envelope"], T=dyn["T"], s=dyn["s"],
        order=dyn["order"], amp1=complex(*dyn["amp1"]),
        amp2=complex(*dyn["amp2"]), width=dyn["width"], N=dyn["N"],
    )
    dirac = analyze_dirac_point(basis, pot, W, sim.sigma, N=sim.N,
                                with_cone=False)
    fine = sim.fine_grid(basis)
    coarse = sim.envelope_grid(basis)
    profiles = build_micro_profiles(basis, dirac, fine)
    kap_fine = kappa.evaluate(fine.x_coords(), origin=fine.box_center())
    env0 = gaussian_envelopes(coarse, sim.amp1, sim.amp2, sim.width)
    psi0 = synthesize_wavepacket(env0, profiles)
    frame_times = dyn["frames"] or [sim.T]
    frames, info = evolve_fnls(psi0, pot, W, kap_fine, sim, frame_times)

    files = []
    base0 = os.path.join(outdir, "field_000")
    write_field_snapshot(base0, psi0, sigma=sim.sigma)
    files.append("field_000")
    for i, fld in enumerate(frames, start=1):
        base = os.path.join(outdir, f"field_{i:03d}")
        write_field_snapshot(base, fld, sigma=sim.sigma)
        files.append(f"field_{i:03d}")
    summary = {
        "epsilon": sim.epsilon, "sigma": sim.sigma, "mu": sim.mu,
        "frames": [0.0] + [f.t for f in frames],
        "files": files,
        "massDrift": info["massDrift"], "dt": info["dt"],
        "steps": info["steps"], "cflReduced": info["cflReduced"],
    }
    write_json(os.path.join(outdir, "evolve_summary.json"), summary)
    return summary


def run_validate(cfg: dict, outdir: str, threads: int) -> dict:
    basis = make_honeycomb_basis()
    pot = build_potential(cfg["potential"], "potential")
    W = build_potential(cfg["perturbation"], "perturbation")
    kappa = build_modulation(cfg["modulation"])
    dyn = cfg["dynamics"]
    val = cfg["validate"]
    sim = SimConfig(
        sigma=cfg["operator"]["sigma"], epsilon=dyn["epsilon"], mu=dyn["mu"],
        cells=dyn["cells"], points_per_cell=dyn["points_per_cell"],
        envelope_points_per_cell=dyn["envelope_points_per_cell"],
        dt=dyn["dt"], dt_envelope=dyn["dt_envelope"], T=dyn["T"], s=dyn["s"],
        order="leading", amp1=complex(*dyn["amp1"]),
        amp2=complex(*dyn["amp2"]), width=dyn["width"], N=dyn["N"],
    )
    dirac = analyze_dirac_point(basis, pot, W, sim.sigma, N=sim.N,
                                with_cone=False)
    report = convergence_study(basis, pot, W, kappa, dirac, sim,
                               val["eps_list"], threads=threads)
    if val["compare_corrected"]:
        import dataclasses
        ceps = val["corrected_eps"]
        csim = dataclasses.replace(sim, order="corrected")
        corrected = run_two_scale_case(basis, pot, W, kappa, dirac,
                                       csim.at_epsilon(ceps))
        leading_err = None
        for case in report["cases"]:
            if abs(case["epsilon"] - ceps) < 1e-12:
                leading_err = case["error"]
        report["corrected"] = corrected
        report["correctedImproves"] = (
            leading_err is not None and corrected["error"] < leading_err)
    report["minRate"] = val["min_rate"]
    write_json(os.path.join(outdir, "convergence.json"), report)

    lines = ["two-scale envelope validation", ""]
    for case in report["cases"]:
        lines.append(
            f"  eps={case['epsilon']:<6g} error={case['error']:.6e} "
            f"massDrift={case['massDrift']:.2e} "
            f"chargeDrift={case['chargeDrift']:.2e} "
            f"runtime={case['runtimeSec']:.1f}s")
    if "fittedRate" in report:
        lines.append(f"  fitted rate: {report['fittedRate']:.3f} "
                     f"(required >= {val['min_rate']})")
    if "corrected" in report:
        lines.append(
            f"  corrected initial data at eps={val['corrected_eps']}: "
            f"error={report['corrected']['error']:.6e} "
            f"(improves: {report['correctedImproves']})")
    with open(os.path.join(outdir, "summary.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return report


def run_shallow_check(cfg: dict, outdir: str, threads: int) -> dict:
    basis = make_honeycomb_basis()
    base_pot = build_potential(cfg["potential"], "potential")
    eps_pot = cfg["shallow"]["eps_pot"]
    sigma = cfg["operator"]["sigma"]
    pot = base_pot.scaled(eps_pot)
    N = cfg["dirac"]["N"]
    data = analyze_dirac_point(basis, pot, None, sigma, N=N, with_cone=False)

    pw = PlaneWaveBasis(basis, N)
    H = assemble_bloch_matrix(basis, pw, pot, basis.K, sigma)
    window = solve_bands(H, count=8, eigenvectors=False)
    b_star = data.band_pair[0]
    e_sym = float(window.eigenvalues[b_star + 1])

    E0 = float(np.linalg.norm(basis.K) ** sigma)
    v00 = base_pot.coefficient(0, 0).real * eps_pot
    v01 = base_pot.coefficient(0, 1).real * eps_pot
    predicted_ED = E0 + (v00 - v01)
    predicted_split = 3.0 * v01
    predicted_vF = 0.5 * sigma * (4.0 * np.pi / 3.0) ** (sigma - 1.0)
    split = e_sym - data.E_D
    report = {
        "epsPot": eps_pot,
        "sigma": sigma,
        "E0": E0,
        "E_D": data.E_D,
        "predictedED": predicted_ED,
        "EDDeviation": abs(data.E_D - predicted_ED),
        "symmetricEigenvalue": e_sym,
        "splitting": split,
        "predictedSplitting": predicted_split,
        "splittingDeviation": abs(split - predicted_split),
        "vF": data.vF,
        "predictedVF": predicted_vF,
        "vFRelativeDeviation": abs(data.vF - predicted_vF) / predicted_vF,
    }
    write_json(os.path.join(outdir, "shallow.json"), report)
    return report


def run_product_rule(cfg: dict, outdir: str, threads: int) -> dict:
    basis = make_honeycomb_basis()
    pot = build_potential(cfg["potential"], "potential")
    W = build_potential(cfg["perturbation"], "perturbation")
    sigma = cfg["operator"]["sigma"]
    section = cfg["product_rule"]
    dirac = analyze_dirac_point(basis, pot, W, sigma, N=cfg["dirac"]["N"],
                                with_cone=False)
    pw = PlaneWaveBasis(basis, dirac.N)
    eps_list = section["eps_list"]
    if not eps_list:
        raise ConfigError("[product_rule] eps_list must be nonempty")
    eps0 = eps_list[0]
    cases = []
    for eps in eps_list:
        cells = max(4, int(round(section["cells"] * eps0 / eps)))
        grid = BoxGrid(basis, cells, section["points_per_cell"], float(eps))
        out = product_rule_check(basis, dirac.phi1, pw, grid, sigma,
                                 s=section["s"], width=section["width"])
        case = {"epsilon": float(eps), "qNorm": out["qNorm"],
                "bandlimitLoss": out["bandlimitLoss"]}
        if "leibnizResidual" in out:
            case["leibnizResidual"] = out["leibnizResidual"]
        cases.append(case)
    report = {"sigma": sigma, "cases": cases}
    if len(cases) >= 2:
        report["ratios"] = [cases[i]["qNorm"] / cases[i + 1]["qNorm"]
                            for i in range(len(cases) - 1)]
    write_json(os.path.join(outdir, "product_rule.json"), report)
    return report


RUNNERS = {
    "bands": run_bands,
    "dirac": run_dirac,
    "evolve": run_evolve,
    "validate": run_validate,
    "shallow-check": run_shallow_check,
    "product-rule": run_product_rule,
}


def run_experiment(kind: str, cfg: dict, outdir: str, threads: int = 1) -> dict:
    ensure_outdir(outdir)
    write_resolved_config(os.path.join(outdir, "resolved_config.toml"), cfg)
    return RUNNERS[kind](cfg, outdir, threads)
