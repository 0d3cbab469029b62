import hashlib
import json
import os

import numpy as np
from click.testing import CliRunner

from fracbloch.cli import main


def run_cli(args):
    return CliRunner().invoke(main, args, catch_exceptions=False)


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SMALL_BANDS = """
[bands]
N = 8
npoints = 11
"""

SMALL_GRID = """
[bands]
N = 8
grid_points = 5
radius = 0.2
"""


def test_presets_listed():
    res = run_cli(["presets"])
    names = res.output.split()
    for expected in ("fig1a", "fig1b", "fig2", "validate", "shallow"):
        assert expected in names


def test_bands_path_mode(tmp_path):
    cfg = write(tmp_path, "small.toml", SMALL_BANDS)
    out = tmp_path / "run"
    res = run_cli(["bands", "--preset", "fig2", "--config", cfg,
                   "--out", str(out)])
    assert res.exit_code == 0
    meta = json.loads((out / "bands_meta.json").read_text())
    assert len(meta["files"]) == 3
    assert (out / "resolved_config.toml").exists()

    # Dirac energy ordering increases with sigma along the three files
    eds = []
    for name in meta["files"]:
        rows = np.loadtxt(out / name, delimiter=",", skiprows=1)
        mid = len(rows) // 2
        eds.append(0.5 * (rows[mid, 2] + rows[mid, 3]))
    assert eds[0] < eds[1] < eds[2]


def test_bands_grid_modes(tmp_path):
    cfg = write(tmp_path, "small.toml", SMALL_GRID)
    out_a = tmp_path / "fig1a"
    res = run_cli(["bands", "--preset", "fig1a", "--config", cfg,
                   "--out", str(out_a)])
    assert res.exit_code == 0
    rows = np.loadtxt(out_a / "bands_sigma2.csv", delimiter=",", skiprows=1)
    gap = rows[:, 3] - rows[:, 2]
    centre = len(rows) // 2
    assert gap.min() < 1e-6
    assert np.argmin(gap) == centre  # the patch contains K exactly

    out_b = tmp_path / "fig1b"
    res = run_cli(["bands", "--preset", "fig1b", "--config", cfg,
                   "--out", str(out_b)])
    assert res.exit_code == 0
    rows = np.loadtxt(out_b / "bands_sigma2.csv", delimiter=",", skiprows=1)
    assert (rows[:, 3] - rows[:, 2]).min() > 1e-3


def test_bands_determinism(tmp_path):
    cfg = write(tmp_path, "small.toml", SMALL_BANDS)
    digests = []
    for run in ("a", "b"):
        out = tmp_path / run
        res = run_cli(["bands", "--preset", "fig2", "--config", cfg,
                       "--out", str(out)])
        assert res.exit_code == 0
        h = hashlib.sha256()
        for name in sorted(os.listdir(out)):
            h.update((out / name).read_bytes())
        digests.append(h.hexdigest())
    assert digests[0] == digests[1]


def test_dirac_report(tmp_path):
    cfg = write(tmp_path, "d.toml", """
[dirac]
N = 10
cone = true
cone_directions = 8
gap_eps = [0.02, 0.04]
""")
    out = tmp_path / "dirac"
    res = run_cli(["dirac", "--preset", "dirac-default", "--config", cfg,
                   "--out", str(out)])
    assert res.exit_code == 0
    rep = json.loads((out / "dirac.json").read_text())
    for key in ("sigma", "N", "E_D", "vF", "theta", "b1", "b2", "coneFit",
                "structureResiduals", "gapTable", "bandPair", "pairingRaw"):
        assert key in rep
    assert rep["bandPair"] == [1, 2]
    assert rep["vF"] > 0
    assert abs(rep["gapTable"]["slope"] - rep["gapTable"]["twoAbsTheta"]) \
        < 0.1 * rep["gapTable"]["twoAbsTheta"]


def test_dirac_sigma_ordering(tmp_path):
    vfs = {}
    for sigma in (1.2, 2.0):
        cfg = write(tmp_path, f"d{sigma}.toml", f"""
[operator]
sigma = {sigma}

[potential]
name = "numpoten"

[perturbation]
name = "nummodu"

[dirac]
N = 10
cone = false
gap_eps = []
""")
        out = tmp_path / f"dirac{sigma}"
        res = run_cli(["dirac", "--config", cfg, "--out", str(out)])
        assert res.exit_code == 0
        vfs[sigma] = json.loads((out / "dirac.json").read_text())["vF"]
    assert vfs[1.2] < vfs[2.0]


def test_dirac_structured_failure_for_free_operator(tmp_path):
    cfg = write(tmp_path, "free.toml", """
[potential]
name = "zero"

[dirac]
N = 8
cone = false
gap_eps = []
""")
    out = tmp_path / "free"
    res = run_cli(["dirac", "--config", cfg, "--out", str(out)])
    assert res.exit_code == 3
    err = json.loads((out / "error.json").read_text())
    assert err["error"] == "NotIsolatedError"


def test_config_error_exit_code(tmp_path):
    cfg = write(tmp_path, "bad.toml", """
[operator]
sigma = 2.5
""")
    res = run_cli(["dirac", "--config", cfg, "--out", str(tmp_path / "x")])
    assert res.exit_code == 2

    cfg2 = write(tmp_path, "bad2.toml", """
[nonsense]
key = 1
""")
    res = run_cli(["dirac", "--config", cfg2, "--out", str(tmp_path / "y")])
    assert res.exit_code == 2

    res = run_cli(["dirac", "--out", str(tmp_path / "z")])
    assert res.exit_code == 2


def test_shallow_check(tmp_path):
    out = tmp_path / "shallow"
    res = run_cli(["shallow-check", "--preset", "shallow", "--out", str(out)])
    assert res.exit_code == 0
    rep = json.loads((out / "shallow.json").read_text())
    assert rep["EDDeviation"] < 5 * rep["epsPot"] ** 2
    assert rep["splittingDeviation"] < 5 * rep["epsPot"] ** 2
    assert rep["vFRelativeDeviation"] < 0.05


def test_product_rule_cli(tmp_path):
    cfg = write(tmp_path, "pr.toml", """
[dirac]
N = 12

[product_rule]
eps_list = [0.1, 0.05]
cells = 24
points_per_cell = 6
width = 0.22
""")
    out = tmp_path / "pr"
    res = run_cli(["product-rule", "--preset", "product-rule",
                   "--config", cfg, "--out", str(out)])
    assert res.exit_code == 0
    rep = json.loads((out / "product_rule.json").read_text())
    assert 3.0 < rep["ratios"][0] < 5.0


def test_evolve_and_validate_smoke(tmp_path):
    cfg = write(tmp_path, "ev.toml", """
[dynamics]
cells = 16
points_per_cell = 6
envelope_points_per_cell = 2
dt = 5e-4
T = 0.02
width = 0.2
N = 12
frames = [0.01, 0.02]
""")
    out = tmp_path / "ev"
    res = run_cli(["evolve", "--preset", "evolve-demo", "--config", cfg,
                   "--out", str(out)])
    assert res.exit_code == 0
    summary = json.loads((out / "evolve_summary.json").read_text())
    assert summary["massDrift"] < 1e-8
    assert summary["files"] == ["field_000", "field_001", "field_002"]
    for base in summary["files"]:
        assert (out / f"{base}.bin").exists()
        meta = json.loads((out / f"{base}.json").read_text())
        assert meta["schemaVersion"] == 1

    cfgv = write(tmp_path, "val.toml", """
[dynamics]
cells = 16
points_per_cell = 6
envelope_points_per_cell = 2
dt = 5e-4
T = 0.02
width = 0.2
N = 12

[validate]
eps_list = [0.1]
compare_corrected = false
min_rate = 0.0
""")
    outv = tmp_path / "val"
    res = run_cli(["validate", "--preset", "validate-smoke", "--config", cfgv,
                   "--out", str(outv)])
    assert res.exit_code == 0
    rep = json.loads((outv / "convergence.json").read_text())
    assert len(rep["cases"]) == 1
    assert np.isfinite(rep["cases"][0]["error"])
    assert rep["cases"][0]["massDrift"] < 1e-8
    assert (outv / "summary.txt").exists()


def test_resolved_config_reproduces(tmp_path):
    cfg = write(tmp_path, "small.toml", SMALL_BANDS)
    out1 = tmp_path / "r1"
    run_cli(["bands", "--preset", "fig2", "--config", cfg, "--out", str(out1)])
    out2 = tmp_path / "r2"
    res = run_cli(["bands", "--config", str(out1 / "resolved_config.toml"),
                   "--out", str(out2)])
    assert res.exit_code == 0
    for name in json.loads((out1 / "bands_meta.json").read_text())["files"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
