import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lfppl.cli import main
from lfppl.density import Model
from lfppl.errors import LFPPLError
from lfppl.harness import (ReferencePosterior, batch_means_se, canonical_order, ess, fig1_branch_posterior,
                           fixture, gmm_grid_reference, mse_vs_reference, program_text, run_experiment,
                           wmae, wmae_curve)
from lfppl.inference import SamplerConfig, run_chain


def test_wmae_zero():
    assert wmae([[0.0, 0.0, 0.0]]) == 0.0


def test_wmae_cancellation():
    assert wmae([[1, -1, 1, -1]]) == 0.0


def test_wmae_two_dims():
    assert wmae([[1, 1], [0.5, -0.5]]) == 1.0


def test_wmae_empty():
    with pytest.raises(LFPPLError):
        wmae([[]])


def test_wmae_curve_matches_pointwise():
    rows = np.random.default_rng(0).normal(size=(50, 3))
    curve = wmae_curve(rows)
    for n in (1, 7, 50):
        assert curve[n - 1] == pytest.approx(wmae(rows.T, n))


@settings(max_examples=100, deadline=None)
@given(st.lists(st.lists(st.floats(-100, 100), min_size=6, max_size=6), min_size=1, max_size=4),
       st.floats(0.01, 100), st.randoms(use_true_random=False))
def test_wmae_permutation_and_scaling(samples, c, rnd):
    base = wmae(samples)
    perm = list(range(6))
    rnd.shuffle(perm)
    assert wmae([[row[i] for i in perm] for row in samples]) == pytest.approx(base, abs=1e-9)
    assert wmae([[c * v for v in row] for row in samples]) == pytest.approx(c * base, rel=1e-9, abs=1e-9)


def test_mse_of_exact_means_is_zero():
    ref = ReferencePosterior("closed-form", {"mu1": -2.0, "mu2": 2.0}, {})
    mse = mse_vs_reference({"mu1": np.full(100, -2.0), "mu2": np.full(100, 2.0)}, ref)
    assert np.all(mse == 0)


def test_mse_missing_variable():
    ref = ReferencePosterior("closed-form", {"mu1": 0.0}, {})
    with pytest.raises(LFPPLError):
        mse_vs_reference({"mu3": [1.0]}, ref)


def test_canonical_order():
    assert canonical_order([[2.0, -1.0], [-3.0, 4.0]]).tolist() == [[-1.0, 2.0], [-3.0, 4.0]]


def test_grid_reference_normalisation_and_refinement():
    coarse = gmm_grid_reference(400)
    fine = gmm_grid_reference(800)
    assert abs(coarse.weight_sum - 1) <= 1e-9
    assert coarse.resolution == 400
    for k in ("mu1", "mu2"):
        assert abs(coarse.means[k] - fine.means[k]) < 1e-3
    assert coarse.means["mu1"] < -1.5 and coarse.means["mu2"] > 1.5


def test_fig1_posterior_closed_form():
    # the likelihood is constant on each side of q, so the posterior is a ratio of areas
    for q in (0.2, 0.5, 0.9):
        a = (1 - q) * stats.norm.pdf(0.0)
        b = q * stats.norm.pdf(1.0)
        assert fig1_branch_posterior(q, 1.0) == pytest.approx(a / (a + b), abs=1e-9)


def test_ess_of_independent_draws():
    x = np.random.default_rng(0).normal(size=4000)
    assert 3000 < ess(x) < 5000


def test_ess_of_correlated_draws():
    rng = np.random.default_rng(1)
    x = np.zeros(4000)
    for i in range(1, x.size):
        x[i] = 0.9 * x[i - 1] + rng.normal()
    # AR(1) with rho = 0.9 has integrated time (1 + rho) / (1 - rho) = 19
    assert 4000 / 19 * 0.6 < ess(x) < 4000 / 19 * 1.6


def test_batch_means_se_independent():
    x = np.random.default_rng(2).normal(size=50_000)
    assert batch_means_se(x) == pytest.approx(1 / math.sqrt(50_000), rel=0.3)


def test_program_text_unknown():
    with pytest.raises(LFPPLError):
        program_text("nope")


def test_heavytail_one_dimension_symmetric():
    res = run_chain(Model(fixture("heavytail")), SamplerConfig("dhmc", 0.5, 10, 20_000, 500, 3))
    x = res.samples[:, 0]
    assert abs(x.mean()) < 3 * batch_means_se(x)
    assert x.min() >= -6 and x.max() <= 6


# ---------------------------------------------------------------------------
# command line

@pytest.fixture
def fig1_file(tmp_path):
    path = tmp_path / "fig1.lfppl"
    path.write_text(program_text("fig1"))
    return path


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_cli_compile(capsys, fig1_file):
    code, out, _ = run(capsys, "compile", fig1_file, "--const", "q=0.5", "--const", "y=1.0")
    assert code == 0
    d = json.loads(out)
    assert d["delta"] == ["z1"] and d["gamma"] == ["z1"]
    assert len(d["F"]) == 2
    assert sum(p["density"] != "0" for p in d["D"]) == 2


def test_cli_compile_unbound(capsys, fig1_file):
    code, _, err = run(capsys, "compile", fig1_file)
    assert code == 2
    assert "unbound variable 'q'" in err


def test_cli_compile_gmm(capsys, tmp_path):
    path = tmp_path / "gmm.lfppl"
    path.write_text(program_text("gmm"))
    out_file = tmp_path / "gmm.json"
    code, _, _ = run(capsys, "compile", path, "--out", out_file)
    assert code == 0
    assert len(json.loads(out_file.read_text())["delta"]) == 12


def test_cli_syntax_error_has_position(capsys, tmp_path):
    path = tmp_path / "bad.lfppl"
    path.write_text("(let [x (sample (normal 0 1))]\n  (+ x 1)))")
    code, _, err = run(capsys, "compile", path)
    assert code == 2 and "line" in err and "column" in err


def test_cli_usage_errors(capsys, fig1_file, tmp_path):
    assert run(capsys, "compile")[0] == 1
    assert run(capsys, "frobnicate", fig1_file)[0] == 1
    assert run(capsys, "compile", tmp_path / "missing.lfppl")[0] == 1
    assert run(capsys, "compile", fig1_file, "--const", "q")[0] == 1
    assert run(capsys, "sample", fig1_file, "--const", "q=0.5", "--const", "y=1",
               "--epsilon", "-1", "--out", tmp_path / "s.csv")[0] == 1


def test_cli_runtime_error(capsys, tmp_path):
    path = tmp_path / "stuck.lfppl"
    path.write_text("(let [x (sample (normal 0 1))] (observe (uniform (+ x 100) (+ x 101)) 0))")
    code, _, err = run(capsys, "sample", path, "--num-samples", "3", "--out", tmp_path / "s.csv")
    assert code == 3 and "initial state" in err


def sample_args(fig1_file, out, *extra):
    return ("sample", fig1_file, "--const", "q=0.5", "--const", "y=1.0", "--engine", "dhmc",
            "--epsilon", "0.1", "--steps", "10", "--seed", "7", "--out", out, *extra)


def test_cli_sample_outputs(capsys, fig1_file, tmp_path):
    out = tmp_path / "run" / "s.csv"
    code, _, _ = run(capsys, *sample_args(fig1_file, out, "--num-samples", "300", "--burn-in", "20"))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "z1,b0"
    assert len(lines) == 301
    manifest = json.loads(out.with_suffix(".json").read_text())
    assert manifest["config"]["seed"] == 7
    assert manifest["diagnostics"]["iterations"] == 320
    assert set(manifest["diagnostics"]) >= {"acceptance_rate", "crossings", "ess", "wall_time"}


def test_cli_sample_zero(capsys, fig1_file, tmp_path):
    out = tmp_path / "empty.csv"
    assert run(capsys, *sample_args(fig1_file, out, "--num-samples", "0"))[0] == 0
    assert out.read_text() == "z1,b0\n"


def test_cli_sample_is_byte_identical(capsys, fig1_file, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, *sample_args(fig1_file, a, "--num-samples", "200"))
    run(capsys, *sample_args(fig1_file, b, "--num-samples", "200"))
    assert a.read_bytes() == b.read_bytes()


def test_cli_sample_mass_by_label(capsys, fig1_file, tmp_path):
    out = tmp_path / "m.csv"
    assert run(capsys, *sample_args(fig1_file, out, "--num-samples", "10", "--mass", "x=0.5"))[0] == 0
    assert run(capsys, *sample_args(fig1_file, out, "--num-samples", "10", "--mass", "w=0.5"))[0] == 1


def test_cli_experiment_heavytail(capsys, tmp_path):
    code, out, _ = run(capsys, "experiment", "heavytail", "--dims", "2", "--runs", "2",
                       "--num-samples", "300", "--seed", "1", "--out", tmp_path / "ht")
    assert code == 0 and "median WMAE" in out
    for f in ("report.json", "wmae_samples_dhmc.dat", "wmae_samples_hmc.dat",
              "wmae_time_dhmc.dat", "wmae_time_hmc.dat"):
        assert (tmp_path / "ht" / f).exists()
    report = json.loads((tmp_path / "ht" / "report.json").read_text())
    assert report["dims"] == 2 and report["runs"] == 2


def test_experiment_gmm_small(tmp_path):
    report = run_experiment("gmm", seed=0, out=tmp_path, num_samples=300)
    assert len(report["ordered_means"]) == 2
    assert (tmp_path / "mse.dat").read_text().startswith("# samples mse\n")
    assert (tmp_path / "samples.csv").exists()


def test_experiment_is_deterministic(tmp_path):
    a = run_experiment("heavytail", seed=3, out=tmp_path / "a", dims=1, runs=1, num_samples=200)
    b = run_experiment("heavytail", seed=3, out=tmp_path / "b", dims=1, runs=1, num_samples=200)
    assert a["summary"]["dhmc"]["wmae"] == b["summary"]["dhmc"]["wmae"]
    assert (tmp_path / "a" / "wmae_samples_hmc.dat").read_bytes() == \
        (tmp_path / "b" / "wmae_samples_hmc.dat").read_bytes()


def test_experiment_unknown():
    with pytest.raises(LFPPLError):
        run_experiment("coinflip")
