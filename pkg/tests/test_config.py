import pytest
from pydantic import ValidationError

from conftest import write_config
from panel_cf.config import Settings, load_run_config


def _base(fixtures_dir) -> str:
    return f'seed = 7\n[paths]\npanel = "{(fixtures_dir / "panel_small.csv").as_posix()}"\n'


def test_minimal_config_defaults(tmp_path, fixtures_dir):
    cfg = load_run_config(write_config(tmp_path / "run.toml", _base(fixtures_dir)))
    assert cfg.seed == 7
    assert cfg.estimator.name == "did"
    assert cfg.inference.alpha == 0.05 and cfg.inference.n_delta == 500
    assert cfg.placebo.n_trials == 10
    with pytest.raises(ValueError):
        cfg.require_mask()


def test_relative_paths_resolve_against_config_dir(tmp_path, fixtures_dir):
    (tmp_path / "data").mkdir()
    (tmp_path / "data" / "p.csv").write_bytes((fixtures_dir / "did_toy.csv").read_bytes())
    cfg = load_run_config(
        write_config(tmp_path / "run.toml", 'seed = 1\npaths.panel = "data/p.csv"\npaths.out = "out"\n')
    )
    assert cfg.paths.panel == tmp_path.resolve() / "data" / "p.csv"
    assert cfg.paths.out == tmp_path.resolve() / "out"


def test_dotted_keys_and_seed_override(tmp_path, fixtures_dir):
    text = _base(fixtures_dir) + '[mask]\ntreated = ["t1"]\nt0_label = 2004\n'
    path = write_config(tmp_path / "run.toml", text)
    cfg = load_run_config(path, seed=99)
    assert cfg.seed == 99
    assert cfg.require_mask().t0_label == 2004
    assert cfg.config_hash() != load_run_config(path).config_hash()
    assert load_run_config(path).config_hash() == load_run_config(path).config_hash()


@pytest.mark.parametrize(
    "extra",
    [
        "[inference]\nalpha = 1.5\n",
        "[inference]\nalpha = 0.0\n",
        '[mask]\ntreated = ["t1"]\nt0 = 4\nt0_label = 2004\n',
        '[mask]\ntreated = ["t1"]\n',
        "[mask]\ntreated = []\nt0 = 2\n",
        "[placebo]\nn_trials = 0\n",
        "[estimator]\nnama = \"did\"\n",
    ],
)
def test_invalid_sections(tmp_path, fixtures_dir, extra):
    with pytest.raises(ValidationError):
        load_run_config(write_config(tmp_path / "run.toml", _base(fixtures_dir) + extra))


def test_seed_is_mandatory(tmp_path, fixtures_dir):
    text = f'[paths]\npanel = "{(fixtures_dir / "panel_small.csv").as_posix()}"\n'
    with pytest.raises(ValidationError):
        load_run_config(write_config(tmp_path / "run.toml", text))


def test_missing_files(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_run_config(tmp_path / "nope.toml")
    with pytest.raises(ValidationError):
        load_run_config(write_config(tmp_path / "run.toml", 'seed = 1\npaths.panel = "hilang.csv"\n'))


def test_estimator_params_lookup(tmp_path, fixtures_dir):
    text = _base(fixtures_dir) + (
        '[estimator]\nname = "scm"\nparams = { iters = 50 }\n'
        "[placebo.params.mcnnm]\nfolds = 2\n"
    )
    cfg = load_run_config(write_config(tmp_path / "run.toml", text))
    assert cfg.estimator_params("scm") == {"iters": 50}
    assert cfg.estimator_params("mcnnm") == {"folds": 2}
    assert cfg.estimator_params("did") == {}


def test_settings_from_env(monkeypatch):
    monkeypatch.setenv("PANEL_CF_JOBS", "3")
    monkeypatch.setenv("PANEL_CF_LOG_LEVEL", "DEBUG")
    settings = Settings()
    assert settings.jobs == 3
    assert settings.log_level == "DEBUG"
