import numpy as np
import pytest

from spectral_plausible import HyperCube, SpectralGrid, form_rgb, load_cie1964
from spectral_plausible.cli import main
from spectral_plausible.dataio import (
    read_cube,
    read_null_model,
    read_rgb_image,
    write_cube,
    write_sensitivities,
)
from .conftest import random_sensitivities


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def kv(out):
    return dict(line.split("=", 1) for line in out.splitlines() if "=" in line)


@pytest.fixture
def dataset(tmp_path, capsys):
    d = tmp_path / "data"
    code, out, _ = run(capsys, "synth", "--num-images", 5, "--height", 6, "--width", 6,
                       "--out-dir", d, "--seed", 3)
    assert code == 0
    return sorted(d.glob("*.hspc"))


def test_help_and_bad_args(capsys):
    assert run(capsys, "--help")[0] == 0
    assert run(capsys, "nope")[0] == 2
    assert run(capsys, "train")[0] == 2


def test_synth_writes_cubes(dataset):
    assert len(dataset) == 5
    cube = read_cube(dataset[0])
    assert cube.data.shape == (6, 6, 31) and np.all(cube.data > 0)


def test_simulate_single_pixel(tmp_path, capsys):
    cie = load_cie1964()
    r = np.linspace(0.1, 0.9, 31)
    write_cube(tmp_path / "p.hspc", HyperCube(SpectralGrid(), r.reshape(1, 1, 31)))
    code, out, _ = run(capsys, "simulate", tmp_path / "p.hspc", "--out-dir", tmp_path / "rgb")
    assert code == 0
    img = read_rgb_image(tmp_path / "rgb" / "p.hsrg")
    assert np.array_equal(img.data[0, 0], form_rgb(r, cie))


def test_missing_sensitivity_file(tmp_path, capsys, dataset):
    missing = tmp_path / "nothere.csv"
    code, _, err = run(capsys, "simulate", dataset[0], "--sensitivities", missing)
    assert code == 2
    assert str(missing) in err and err.startswith("error: code=2")


def test_evaluate_identical_is_zero(capsys, dataset):
    code, out, _ = run(capsys, "evaluate", dataset[0], dataset[0])
    assert code == 0
    rep = kv(out)
    for key in ("mean_mrae", "wc_mrae", "mean_de", "wc_de"):
        assert float(rep[key]) == 0


def test_evaluate_fixed_white_point(capsys, dataset):
    code, out, _ = run(capsys, "evaluate", dataset[0], dataset[1], "--white-point", "10,10,10",
                       "--worst-k", 5)
    assert code == 0 and kv(out)["worst_k"] == "5" and float(kv(out)["mean_de"]) > 0
    assert run(capsys, "evaluate", dataset[0], dataset[1], "--white-point", "1,2")[0] == 2


def test_basis_cie_and_indicator(tmp_path, capsys):
    code, out, _ = run(capsys, "basis", "--out-dir", tmp_path)
    assert code == 0
    res = kv(out)
    for key in ("st_n", "nt_n_minus_i", "ps_plus_pn_minus_i", "ps_idempotency"):
        assert float(res[key]) < 1e-10
    a = read_null_model(res["path"])
    b = read_null_model(res["path"])
    assert a.null_basis.tobytes() == b.null_basis.tobytes()

    ind = tmp_path / "ind.csv"
    ind.write_text("wavelength_nm,s1,s2,s3\n" + "\n".join(
        f"{400 + 10 * i},{int(i == 0)},{int(i == 1)},{int(i == 2)}" for i in range(5)) + "\n")
    code, out, _ = run(capsys, "basis", "--sensitivities", ind, "--out", tmp_path / "ind.hsnm")
    assert code == 0
    n = read_null_model(tmp_path / "ind.hsnm").null_basis
    assert np.allclose(n @ n.T, np.diag([0, 0, 0, 1, 1]), atol=1e-14)


def test_basis_rank_failure(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("wavelength_nm,s1,s2,s3\n" + "\n".join(
        f"{400 + 10 * i},1,1,0" for i in range(5)) + "\n")
    code, _, err = run(capsys, "basis", "--sensitivities", bad)
    assert code == 2 and "RankError" in err


def train_args(dataset, out, *extra):
    return ("train", *dataset[:3], "--hidden", "6", "--epochs", 2, "--out", out, "-q", *extra)


def test_train_reconstruct_plausible(tmp_path, capsys, dataset):
    model = tmp_path / "m.hsmd"
    assert run(capsys, *train_args(dataset, model))[0] == 0
    assert run(capsys, "simulate", dataset[4], "--out-dir", tmp_path)[0] == 0
    rgb = tmp_path / (dataset[4].stem + ".hsrg")
    code, out, _ = run(capsys, "reconstruct", rgb, "--model", model, "--out", tmp_path / "r.hspc")
    assert code == 0
    rep = kv(out)
    assert rep["mode"] == "plausible" and float(rep["reintegration_residual"]) < 1e-10
    cube = read_cube(tmp_path / "r.hspc")
    img = read_rgb_image(rgb)
    assert np.max(np.abs(form_rgb(cube.data, load_cie1964()) - img.data)) < 1e-10


def test_train_reconstruct_direct_has_residual(tmp_path, capsys, dataset):
    model = tmp_path / "d.hsmd"
    assert run(capsys, *train_args(dataset, model, "--mode", "direct"))[0] == 0
    run(capsys, "simulate", dataset[4], "--out-dir", tmp_path)
    code, out, _ = run(capsys, "reconstruct", tmp_path / (dataset[4].stem + ".hsrg"),
                       "--model", model, "--out-dir", tmp_path)
    assert code == 0
    assert kv(out)["mode"] == "direct" and float(kv(out)["reintegration_residual"]) > 1e-8


def test_train_is_deterministic(tmp_path, capsys, dataset):
    for name in ("a.hsmd", "b.hsmd"):
        assert run(capsys, *train_args(dataset, tmp_path / name, "--augment", "true"))[0] == 0
    assert (tmp_path / "a.hsmd").read_bytes() == (tmp_path / "b.hsmd").read_bytes()


def test_reconstruct_fingerprint_mismatch(tmp_path, capsys, dataset):
    model = tmp_path / "m.hsmd"
    run(capsys, *train_args(dataset, model))
    run(capsys, "simulate", dataset[4], "--out-dir", tmp_path)
    other = tmp_path / "other.csv"
    write_sensitivities(other, random_sensitivities(np.random.default_rng(0)))
    code, _, err = run(capsys, "reconstruct", tmp_path / (dataset[4].stem + ".hsrg"),
                       "--model", model, "--sensitivities", other)
    assert code == 2 and "different sensitivities" in err


def test_corrupt_inputs_exit_2(tmp_path, capsys, dataset):
    bad = tmp_path / "bad.hspc"
    bad.write_bytes(b"XXXX" + dataset[0].read_bytes()[4:])
    code, _, err = run(capsys, "evaluate", bad, dataset[0])
    assert code == 2 and "FormatError" in err
    trunc = tmp_path / "trunc.hspc"
    trunc.write_bytes(dataset[0].read_bytes()[:-8])
    code, _, err = run(capsys, "evaluate", trunc, dataset[0])
    assert code == 2 and "offset" in err


def test_config_file(tmp_path, capsys, dataset):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# training setup\nhidden = 5\nepochs=1\nmode=direct\n")
    model = tmp_path / "c.hsmd"
    code, _, _ = run(capsys, "train", *dataset[:2], "--config", cfg, "--out", model, "-q")
    assert code == 0
    from spectral_plausible.dataio import read_model
    m = read_model(model)
    assert m.spec.mode == "direct" and m.spec.hidden_layers == (5,) and m.meta["epochs"] == 1
    # flags beat the file
    run(capsys, "train", *dataset[:2], "--config", cfg, "--out", model, "--epochs", 2, "-q")
    assert read_model(model).meta["epochs"] == 2
    cfg.write_text("colour=blue\n")
    code, _, err = run(capsys, "train", *dataset[:2], "--config", cfg)
    assert code == 2 and "colour" in err


def test_experiment_writes_reports(tmp_path, capsys, dataset):
    out = tmp_path / "exp"
    code, stdout, _ = run(capsys, "experiment", *dataset, "--hidden", "6", "--epochs", 2,
                          "--out-dir", out, "-q")
    assert code == 0
    for name in ("report.txt", "metrics.csv", "eta_mean.csv", "eta_wc.csv", "run.json"):
        assert (out / name).exists()
    rows = (out / "eta_mean.csv").read_text().splitlines()
    assert len(rows) == 12 and rows[0].startswith("gamma,direct")
    assert "plausible+aug" in stdout


def test_experiment_empty_split(tmp_path, capsys, dataset):
    code, _, err = run(capsys, "experiment", dataset[0], "--epochs", 1, "--out-dir", tmp_path)
    assert code == 2


def test_inputs_not_modified(tmp_path, capsys, dataset):
    before = dataset[0].read_bytes()
    run(capsys, "simulate", dataset[0], "--out-dir", tmp_path)
    run(capsys, "evaluate", dataset[0], dataset[0])
    assert dataset[0].read_bytes() == before
