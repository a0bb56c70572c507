import pytest

from adaptcl.config import (TABLE_SCHEDULE, ExperimentConfig, dump_config, load_config,
                            parse_overrides, read_config_text)


def test_defaults_validate():
    cfg = ExperimentConfig()
    assert cfg.prune_interval == 10 and cfg.beta == 1.0 and cfg.schedule() is None


@pytest.mark.parametrize("bad", [dict(policy="sgd"), dict(beta=1.5), dict(noniid_s=-1),
                                 dict(prune_method="random"), dict(sigma=0.5),
                                 dict(aggregation="mean"), dict(lr=0)])
def test_invalid_values_rejected(bad):
    with pytest.raises(ValueError):
        ExperimentConfig(**bad)


def test_aliases_and_coercion():
    out = parse_overrides({"W": "4", "lambda": "0.01", "hidden": "8, 4", "PI": "5"})
    assert out == {"workers": 4, "lam": 0.01, "hidden": (8, 4), "prune_interval": 5}
    with pytest.raises(ValueError):
        parse_overrides({"nope": "1"})


def test_file_round_trip(tmp_path):
    cfg = ExperimentConfig(workers=3, hidden=(9, 7), rate_schedule="2:0.1,0.2,0.0",
                           rho_gap="absolute")
    path = tmp_path / "exp.cfg"
    path.write_text(dump_config(cfg))
    assert load_config(path) == cfg
    assert load_config(path, seed=5).seed == 5


def test_comments_and_schedule_text():
    text = "# header\nT = 30   # rounds\nrate_schedule = 10:0.5,0.0;20:0.1,0.0\nW = 2\n"
    cfg = load_config(None, **parse_overrides(read_config_text(text)))
    assert cfg.rounds == 30
    assert cfg.schedule() == {10: (0.5, 0.0), 20: (0.1, 0.0)}


def test_table_schedule_needs_ten_workers():
    assert ExperimentConfig(rate_schedule="table").schedule() == TABLE_SCHEDULE
    with pytest.raises(ValueError):
        ExperimentConfig(workers=4, rate_schedule="table").schedule()
