import pytest

from fbmsync.config import (ConfigError, ExperimentConfig, build_driver, default_alpha,
                            load_config, resolve_model)
from fbmsync.paths import GridPath, RoughLift


def test_ini_round_trip(tmp_path):
    cfg = ExperimentConfig(hurst=0.4, n_steps=256, kappas=(0.0, 5.0), seeds=(2, 7),
                           alpha=0.36, c_sigma=2.0, tolerances={"pvar_rel": 1e-6})
    path = tmp_path / "c.ini"
    path.write_text(cfg.to_ini())
    back = load_config(path)
    assert back == cfg
    assert back.content_hash() == cfg.content_hash()


def test_defaults_validate():
    cfg = ExperimentConfig().validate()
    assert cfg.seeds == tuple(range(10))
    assert cfg.p == pytest.approx(1 / default_alpha(0.7))


@pytest.mark.parametrize("text", [
    "[driver]\nhurst = 0.7\nbogus = 1\n",
    "[nonsense]\nx = 1\n",
    "[driver]\nn_steps = many\n",
    "not an ini file",
])
def test_malformed_configs(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_ini(text).validate()


def test_seed_ranges():
    cfg = ExperimentConfig.from_ini("[run]\nseeds = 0-3, 9\n")
    assert cfg.seeds == (0, 1, 2, 3, 9)


@pytest.mark.parametrize("kw", [dict(n_steps=0), dict(hurst=0.2), dict(kappas=(-1.0,)),
                                dict(kappas=()), dict(seeds=(1, 1)), dict(lam=1.0),
                                dict(generic_c=1.0), dict(model="nope"), dict(y0_1=(1.0, 2.0)),
                                dict(alpha=0.75), dict(scheme="rk"), dict(c_sigma=0.0)])
def test_invalid_values(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw).validate()


def test_driver_regimes():
    young = build_driver(ExperimentConfig(n_steps=64), 0)
    rough = build_driver(ExperimentConfig(hurst=0.4, n_steps=64), 0)
    assert isinstance(young, GridPath)
    assert isinstance(rough, RoughLift)
    assert rough.base.values.tolist() != young.values.tolist()


def test_model_factory_path():
    model = resolve_model("fbmsync.config:_linear")
    assert model.sigma.name == "linear"
    with pytest.raises(ConfigError):
        resolve_model("fbmsync.config:missing")


def test_c_sigma_override():
    assert ExperimentConfig(c_sigma=3.0).resolved_model().sigma.c_sigma == 3.0


def test_shipped_default_matches_builtin():
    from pathlib import Path
    root = Path(__file__).resolve().parents[1]
    assert load_config(root / "configs" / "default.ini") == ExperimentConfig()
    for name in ("rough.ini", "quick.ini"):
        load_config(root / "configs" / name).validate()
