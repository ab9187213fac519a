"""INI configuration parsing, run assembly, and the command-line tools."""

import numpy as np
import pytest

from multimag import (
    EnergyRecord,
    MU0,
    build_run_setup,
    load_config,
    write_energies_csv,
    write_mesh,
    write_snapshot,
)
from multimag.cli import main
from multimag.fields import CubicContribution, UniaxialContribution


def write_config(tmp_path, body, name="run.ini"):
    path = tmp_path / name
    path.write_text(body)
    return str(path)


@pytest.fixture()
def cube_file(tmp_path, cube1):
    path = tmp_path / "cube.mesh"
    write_mesh(str(path), cube1)
    return "cube.mesh"


MINIMAL = """\
[mesh]
omega1 = cube.mesh

[constants]
c_exch = 1.0
c_ani = 0.5
alpha = 1.0
t_final = 1.0

[run]
k = 1e-4
n_steps = 5
initial_vector = 0 0 1

[output]
directory = out
"""


def test_minimal_config_defaults(tmp_path, cube_file):
    cfg = load_config(write_config(tmp_path, MINIMAL))
    assert cfg.mesh_omega1.endswith("cube.mesh")
    assert cfg.mesh_omega2 is None
    assert cfg.theta == 1.0
    assert cfg.k == 1e-4
    assert cfg.n_steps == 5
    assert cfg.initial_kind == "uniform"
    np.testing.assert_array_equal(cfg.initial_vector, [0.0, 0.0, 1.0])
    assert cfg.terms == ()
    assert cfg.strayfield_method == "none"
    assert cfg.applied_kind == "none"
    assert cfg.solver_tol == 1e-10
    assert cfg.bem_quad_degree == 5
    assert cfg.output_dir.endswith("out")
    assert cfg.cadence == 10
    assert cfg.vtk is False
    assert cfg.constants.c_ani == 0.5


FULL = """\
[mesh]
omega1 = cube.mesh
omega2 = cube.mesh   ; paths resolve relative to this file

[constants]
c_exch = 1.0
c_ani = 0.2
alpha = 0.5
t_final = 2.0

[run]
theta = 0.7
k = 1e-3
n_steps = 10
initial = uniform
initial_vector = 1 1 0

[contributions]
terms = uniaxial, cubic, strayfield, multiscale

[uniaxial]
axis = 0 0 2

[cubic]
k1 = 1.5
k2 = 0.25

[strayfield]
method = gcr

[multiscale]
law = tanh
params = 1.0 2.0
scheme = kacanov
tol = 1e-6
max_iter = 50

[applied_field]
kind = sinusoidal
amplitude = 0 0.1 0
omega = 3.0

[solver]
tol = 1e-9
bem_quadrature_degree = 2

[output]
directory = results
cadence = 5
vtk = true
"""


def test_full_config_parses(tmp_path, cube_file):
    cfg = load_config(write_config(tmp_path, FULL))
    assert cfg.theta == 0.7
    assert cfg.terms == ("uniaxial", "cubic", "strayfield", "multiscale")
    np.testing.assert_allclose(cfg.uniaxial_axis, [0.0, 0.0, 1.0])  # normalized
    assert (cfg.cubic_k1, cfg.cubic_k2) == (1.5, 0.25)
    assert cfg.strayfield_method == "gcr"
    assert cfg.multiscale_law == "tanh"
    assert cfg.multiscale_params == (1.0, 2.0)
    assert cfg.multiscale_scheme == "kacanov"
    assert cfg.multiscale_tol == 1e-6
    assert cfg.multiscale_max_iter == 50
    assert cfg.applied_kind == "sinusoidal"
    np.testing.assert_array_equal(cfg.applied_amplitude, [0.0, 0.1, 0.0])
    assert cfg.applied_omega == 3.0
    assert cfg.solver_tol == 1e-9
    assert cfg.bem_quad_degree == 2
    assert cfg.cadence == 5
    assert cfg.vtk is True


def test_material_section_converts_to_reduced_units(tmp_path, cube_file):
    A, K, Ms = 1.3e-11, 4.8e2, 8.0e5
    L = np.sqrt(2.0 * A / (MU0 * Ms**2))  # intrinsic exchange length
    body = MINIMAL.replace(
        "[constants]\nc_exch = 1.0\nc_ani = 0.5\nalpha = 1.0\nt_final = 1.0",
        f"[material]\nexchange_a = {A}\nanisotropy_k = {K}\nsaturation_ms = {Ms}\n"
        f"alpha = 0.02\nlength_scale = {L}\ntime_horizon = 1e-9",
    )
    cfg = load_config(write_config(tmp_path, body))
    np.testing.assert_allclose(cfg.constants.c_exch, 1.0, rtol=1e-12)
    np.testing.assert_allclose(cfg.constants.c_ani, K / (MU0 * Ms), rtol=1e-12)
    assert cfg.constants.alpha == 0.02


@pytest.mark.parametrize(
    "old, new, match",
    [
        ("[output]", "[extra]\nfoo = 1\n\n[output]", r"unknown config section \[extra\]"),
        ("k = 1e-4", "k = 1e-4\nwhatever = 1", r"unknown key 'whatever' in section \[run\]"),
        ("directory = out", "directory = out\ncadence = 0",
         "cadence must be a positive integer"),
        ("directory = out", "directory = out\nvtk = maybe", "vtk must be true or false"),
        ("[output]", "[solver]\nbem_quadrature_degree = 3\n\n[output]", "must be 2 or 5"),
        ("[output]", "[contributions]\nterms = gravity\n\n[output]",
         "unknown contribution term 'gravity'"),
        ("[output]",
         "[contributions]\nterms = uniaxial, uniaxial\n\n[uniaxial]\naxis = 0 0 1\n\n[output]",
         "duplicate contribution terms"),
        ("[output]", "[contributions]\nterms = uniaxial\n\n[uniaxial]\naxis = 0 0 0\n\n[output]",
         "uniaxial axis must be nonzero"),
        ("[output]", "[contributions]\nterms = uniaxial\n\n[uniaxial]\naxis = 0 1\n\n[output]",
         "three space-separated numbers"),
        ("[output]", "[contributions]\nterms = strayfield\n\n[strayfield]\nmethod = magic\n\n[output]",
         "strayfield method must be fk, gcr, or none"),
        ("[output]", "[applied_field]\nkind = pulse\n\n[output]", "applied field kind must be"),
        ("[output]", "[contributions]\nterms = multiscale\n\n[multiscale]\nlaw = linear\nparams = 2\n\n[output]",
         "requires mesh omega2"),
    ],
)
def test_rejects_bad_values(tmp_path, cube_file, old, new, match):
    with pytest.raises(ValueError, match=match):
        load_config(write_config(tmp_path, MINIMAL.replace(old, new)))


@pytest.mark.parametrize(
    "law_block, match",
    [
        ("law = linear\nparams = 1 2", r"law 'linear' takes 1 parameters, got 2"),
        ("law = tanh\nparams = 1", r"law 'tanh' takes 2 parameters, got 1"),
        ("law = rational\nparams = 1 2 3", r"law 'rational' takes 4 parameters, got 3"),
        ("law = zero\nparams = 0.5", r"law 'zero' takes 0 parameters, got 1"),
        ("law = cubic", "unknown material law 'cubic'"),
        ("law = tanh\nparams = 1 1\nscheme = newton", "unknown nonlinear scheme 'newton'"),
    ],
)
def test_multiscale_law_validation(tmp_path, cube_file, law_block, match):
    body = MINIMAL.replace("omega1 = cube.mesh", "omega1 = cube.mesh\nomega2 = cube.mesh")
    body = body.replace(
        "[output]", f"[contributions]\nterms = multiscale\n\n[multiscale]\n{law_block}\n\n[output]"
    )
    with pytest.raises(ValueError, match=match):
        load_config(write_config(tmp_path, body))


def test_material_and_constants_are_exclusive(tmp_path, cube_file):
    both = MINIMAL.replace(
        "[run]",
        "[material]\nexchange_a = 1e-11\nanisotropy_k = 500\nsaturation_ms = 8e5\n"
        "alpha = 0.1\nlength_scale = 5e-9\ntime_horizon = 1e-9\n\n[run]",
    )
    with pytest.raises(ValueError, match="exactly one of"):
        load_config(write_config(tmp_path, both))
    neither = MINIMAL.replace("[constants]", "[constants]\n; c_exch etc. removed below")
    neither = "\n".join(
        line for line in neither.splitlines()
        if not line.startswith(("[constants]", "; c_exch", "c_exch", "c_ani", "alpha", "t_final"))
    )
    with pytest.raises(ValueError, match="exactly one of"):
        load_config(write_config(tmp_path, neither))


@pytest.mark.parametrize(
    "old, new, match",
    [
        ("k = 1e-4", "k = -1e-4", "time step k must be positive"),
        ("k = 1e-4", "k = 1e-4\ntheta = 1.5", r"theta must lie in \[0, 1\]"),
        ("n_steps = 5", "n_steps = -2", "n_steps must be nonnegative"),
        ("initial_vector = 0 0 1", "initial_vector = 0 0 0", "initial_vector must be nonzero"),
        ("initial_vector = 0 0 1", "initial = spiral\ninitial_vector = 0 0 1",
         "initial must be 'uniform' or 'snapshot'"),
        ("k = 1e-4\n", "", "missing required key 'k'"),
    ],
)
def test_run_section_validation(tmp_path, cube_file, old, new, match):
    with pytest.raises(ValueError, match=match):
        load_config(write_config(tmp_path, MINIMAL.replace(old, new)))


def test_missing_sections_and_file(tmp_path, cube_file):
    with pytest.raises(FileNotFoundError, match="config file not found"):
        load_config(str(tmp_path / "nope.ini"))
    for section in ("[mesh]", "[run]", "[output]"):
        body = MINIMAL.replace(section, section.replace("[", "[gone_"))
        with pytest.raises(ValueError):
            load_config(write_config(tmp_path, body))


WIRED = """\
[mesh]
omega1 = cube.mesh

[constants]
c_exch = 1.0
c_ani = 0.3
alpha = 1.0
t_final = 1.0

[run]
k = 1e-3
n_steps = 2
initial_vector = 0 0 5

[contributions]
terms = uniaxial, cubic

[uniaxial]
axis = 1 0 0

[cubic]
k1 = 2.0

[applied_field]
kind = constant
amplitude = 0 0 0.25

[output]
directory = out
"""


def test_build_run_setup_wires_contributions(tmp_path, cube_file):
    setup = build_run_setup(load_config(write_config(tmp_path, WIRED)))
    assert setup.mesh.n_tets == 6
    np.testing.assert_allclose(np.linalg.norm(setup.m0, axis=1), 1.0)
    np.testing.assert_array_equal(setup.m0[0], [0.0, 0.0, 1.0])
    uni, cub = setup.contributions
    assert isinstance(uni, UniaxialContribution)
    assert uni.scale == 0.3
    assert isinstance(cub, CubicContribution)
    assert cub.K1 == 2.0 and cub.K2 == 0.0 and cub.scale == 0.3
    # presets return a broadcastable amplitude, not a per-node array
    field = np.broadcast_to(setup.applied_field(0.7, setup.mesh.nodes), (8, 3))
    np.testing.assert_allclose(field, np.tile([0.0, 0.0, 0.25], (8, 1)))


def test_build_run_setup_strayfield_none_is_dropped(tmp_path, cube_file):
    body = MINIMAL.replace(
        "[output]", "[contributions]\nterms = strayfield\n\n[strayfield]\nmethod = none\n\n[output]"
    )
    setup = build_run_setup(load_config(write_config(tmp_path, body)))
    assert setup.contributions == []


def test_build_run_setup_snapshot_initial(tmp_path, cube_file, cube1):
    rng = np.random.default_rng(5)
    values = rng.normal(size=(cube1.n_nodes, 3))
    values /= np.linalg.norm(values, axis=1, keepdims=True)
    write_snapshot(str(tmp_path / "m0.dat"), values)
    body = MINIMAL.replace(
        "initial_vector = 0 0 1", "initial = snapshot\ninitial_snapshot = m0.dat"
    )
    setup = build_run_setup(load_config(write_config(tmp_path, body)))
    np.testing.assert_array_equal(setup.m0, values)


def test_build_run_setup_multiscale(tmp_path):
    from multimag import icosphere_volume
    from multimag.multiscale import MultiscaleContribution

    write_mesh(str(tmp_path / "near.mesh"), icosphere_volume(0, n_radial=1))
    write_mesh(
        str(tmp_path / "far.mesh"), icosphere_volume(0, n_radial=1, center=(4.0, 0.0, 0.0))
    )
    body = MINIMAL.replace("omega1 = cube.mesh", "omega1 = near.mesh\nomega2 = far.mesh")
    body = body.replace(
        "[output]",
        "[contributions]\nterms = multiscale\n\n[multiscale]\nlaw = linear\nparams = 2.0\n\n[output]",
    )
    setup = build_run_setup(load_config(write_config(tmp_path, body)))
    (contrib,) = setup.contributions
    assert isinstance(contrib, MultiscaleContribution)
    assert contrib.law.kind == "linear"
    assert contrib.scheme == "zarantonello"


# ---------------------------------------------------------------- CLI


def test_cli_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])


def test_cli_check_mesh_exit_codes(tmp_path, cube1, sphere1, capsys):
    good = tmp_path / "cube.mesh"
    write_mesh(str(good), cube1)
    assert main(["check-mesh", str(good)]) == 0
    out = capsys.readouterr().out
    assert "angle condition: SATISFIED" in out

    curved = tmp_path / "sphere.mesh"
    write_mesh(str(curved), sphere1)
    assert main(["check-mesh", str(curved)]) == 1
    out = capsys.readouterr().out
    assert "angle condition: VIOLATED" in out
    assert "k/h -> 0" in out

    bad = tmp_path / "bad.mesh"
    bad.write_text("nodes 2\n0 0 0\n")
    assert main(["check-mesh", str(bad)]) == 2


def test_cli_strayfield_test_passes_on_fine_sphere(tmp_path, sphere2, capsys):
    path = tmp_path / "sphere2.mesh"
    write_mesh(str(path), sphere2)
    assert main(["strayfield-test", str(path), "gcr"]) == 0
    out = capsys.readouterr().out
    assert "PASS (within 10%)" in out


def test_cli_strayfield_test_fails_on_coarse_sphere(tmp_path, sphere1, capsys):
    # the 320-tet sphere is too coarse for the 10% oracle by design
    path = tmp_path / "sphere1.mesh"
    write_mesh(str(path), sphere1)
    assert main(["strayfield-test", str(path), "fk"]) == 1
    assert "FAIL" in capsys.readouterr().out


SIMULATE = """\
[mesh]
omega1 = cube.mesh

[constants]
c_exch = 1.0
c_ani = 0.5
alpha = 1.0
t_final = 1.0

[run]
k = 1e-4
n_steps = 20
initial_vector = 0.2 0 1

[contributions]
terms = uniaxial

[uniaxial]
axis = 0 0 1

[output]
directory = {outdir}
cadence = 5
vtk = {vtk}
"""


def test_cli_simulate_writes_outputs(tmp_path, cube1, capsys):
    write_mesh(str(tmp_path / "cube.mesh"), cube1)
    cfg = write_config(tmp_path, SIMULATE.format(outdir="out", vtk="true"))
    assert main(["simulate", cfg]) == 0
    out = capsys.readouterr().out
    assert "E(0)" in out and "wrote" in out
    outdir = tmp_path / "out"
    snapshots = sorted(p.name for p in outdir.glob("snapshot_*.dat"))
    assert snapshots == [
        "snapshot_00000000.dat",
        "snapshot_00000005.dat",
        "snapshot_00000010.dat",
        "snapshot_00000015.dat",
        "snapshot_00000020.dat",
    ]
    assert (outdir / "energies.csv").exists()
    assert (outdir / "final.vtk").exists()

    # the energy table it just wrote satisfies its own report
    assert main(["energy-report", str(outdir)]) == 0
    assert "PASS: dissipation inequality holds" in capsys.readouterr().out


def test_cli_simulate_is_deterministic(tmp_path, cube1):
    write_mesh(str(tmp_path / "cube.mesh"), cube1)
    cfg_a = write_config(tmp_path, SIMULATE.format(outdir="a", vtk="false"), name="a.ini")
    cfg_b = write_config(tmp_path, SIMULATE.format(outdir="b", vtk="false"), name="b.ini")
    assert main(["simulate", cfg_a]) == 0
    assert main(["simulate", cfg_b]) == 0
    bytes_a = (tmp_path / "a" / "energies.csv").read_bytes()
    bytes_b = (tmp_path / "b" / "energies.csv").read_bytes()
    assert bytes_a == bytes_b


def test_cli_simulate_flushes_partial_trajectory(tmp_path, cube1, capsys):
    # an unreachable solver tolerance aborts the first step; the initial
    # state must still land on disk and the exit code must be nonzero
    write_mesh(str(tmp_path / "cube.mesh"), cube1)
    body = SIMULATE.format(outdir="out", vtk="false") + "\n[solver]\ntol = 1e-300\n"
    cfg = write_config(tmp_path, body)
    assert main(["simulate", cfg]) == 1
    captured = capsys.readouterr()
    assert "run aborted at step" in captured.err
    assert "partial trajectory flushed" in captured.out
    assert (tmp_path / "out" / "snapshot_00000000.dat").exists()
    assert (tmp_path / "out" / "energies.csv").exists()


def fabricated_records(totals):
    return [
        EnergyRecord(
            step=i, time=0.1 * i, e_exch=t, e_int=0.0, e_zeeman=0.0,
            e_total=t, dissipation_sum=0.0,
        )
        for i, t in enumerate(totals)
    ]


def test_cli_energy_report_detects_growth(tmp_path, capsys):
    write_energies_csv(str(tmp_path / "energies.csv"), fabricated_records([1.0, 0.9, 1.1]))
    assert main(["energy-report", str(tmp_path)]) == 1
    assert "first violation at step 2" in capsys.readouterr().out


def test_cli_energy_report_detects_bad_totals(tmp_path, capsys):
    records = fabricated_records([1.0, 0.9])
    broken = [
        EnergyRecord(
            step=r.step, time=r.time, e_exch=r.e_exch, e_int=0.5, e_zeeman=0.0,
            e_total=r.e_total, dissipation_sum=0.0,
        )
        for r in records
    ]
    write_energies_csv(str(tmp_path / "energies.csv"), broken)
    assert main(["energy-report", str(tmp_path)]) == 1
    assert "do not recombine" in capsys.readouterr().out
