import numpy as np
import pytest

from fbmsync.cli import main
from fbmsync.config import ExperimentConfig, load_config


def _config(tmp_path, **kw):
    base = dict(n_steps=64, kappas=(0.0, 10.0), seeds=(0, 1), out_dir=str(tmp_path / "cfgout"))
    base.update(kw)
    path = tmp_path / "c.ini"
    path.write_text(ExperimentConfig(**base).to_ini())
    return str(path)


def test_generate(tmp_path):
    out = tmp_path / "o"
    assert main(["generate", "--config", _config(tmp_path), "--out", str(out)]) == 0
    data = np.loadtxt(out / "paths" / "seed_1.csv", delimiter=",", skiprows=1)
    assert data.shape == (65, 2)
    assert not (out / "paths" / "seed_1_area.csv").exists()
    assert (out / "manifest.txt").exists()


def test_generate_rough_writes_areas(tmp_path):
    out = tmp_path / "o"
    assert main(["generate", "--config", _config(tmp_path, hurst=0.4), "--out", str(out),
                 "--seed", "5"]) == 0
    assert (out / "paths" / "seed_5_area.csv").exists()
    assert not (out / "paths" / "seed_0.csv").exists()


def test_invalid_config_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[driver]\nn_steps = 0\n")
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    bad.write_text("[model]\nname = nothing\n")
    assert main(["simulate", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err


def test_simulate_outputs(tmp_path):
    out = tmp_path / "o"
    assert main(["simulate", "--config", _config(tmp_path), "--out", str(out),
                 "--kappa", "10", "--seed", "1"]) == 0
    run = out / "runs" / "kappa_10_seed_1.csv"
    assert run.exists()
    assert "AbsorbingReport" in (out / "runs" / "kappa_10_seed_1_report.txt").read_text()
    assert not (out / "runs" / "kappa_0_seed_1.csv").exists()


def test_sweep_table_and_plot(tmp_path):
    out = tmp_path / "o"
    assert main(["sweep", "--config", _config(tmp_path), "--out", str(out), "--jobs", "2"]) == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 5
    header = (out / "plot_seed_0.csv").read_text().splitlines()[0]
    assert header == "t,Ybar,Y1_k0,Y2_k0,Y1_k10,Y2_k10"


def test_out_env_and_manifest_reload(tmp_path, monkeypatch):
    out = tmp_path / "env"
    monkeypatch.setenv("FBMSYNC_OUT", str(out))
    cfg = _config(tmp_path)
    assert main(["generate", "--config", cfg]) == 0
    assert (out / "manifest.txt").exists()
    assert not (tmp_path / "cfgout").exists()
    assert load_config(out / "manifest.txt") == load_config(cfg)


def test_reruns_are_byte_identical(tmp_path):
    cfg = _config(tmp_path)
    for name in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--out", str(tmp_path / name),
                     "--kappa", "10"]) == 0
    for f in ("manifest.txt", "runs/kappa_10_seed_0.csv", "runs/kappa_10_seed_1_report.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_verify_exit_codes(tmp_path):
    out = tmp_path / "o"
    assert main(["verify", "--config", _config(tmp_path), "--out", str(out),
                 "--criteria", "1"]) == 0
    assert "[PASS]" in (out / "verify_report.txt").read_text()
    assert main(["verify", "--config", _config(tmp_path, c_sigma=0.5), "--out", str(out),
                 "--criteria", "1"]) == 2


def test_divergence_exit_code(tmp_path):
    cfg = _config(tmp_path, model="linear", y0_1=(9.9e7,), y0_2=(9.9e7,), kappas=(0.0,))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 3


def test_bad_jobs(tmp_path):
    assert main(["sweep", "--config", _config(tmp_path), "--out", str(tmp_path),
                 "--jobs", "0"]) == 1


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
