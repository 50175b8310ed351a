import pytest

from kinject.config import RunConfig, parse_override, read_pairs
from kinject.errors import ConfigError


def _write(tmp_path, text):
    path = tmp_path / "run.conf"
    path.write_text(text)
    return path


def test_file_overrides_and_relative_paths(tmp_path):
    path = _write(tmp_path, "# comment\nseed = 3\ntrain = data/train.tsv\nlabels = neg, pos\ntriple_budget = 10\n")
    cfg = RunConfig.from_file(path, ["seed=4", "freeze_backbone_stage3=no"])
    assert cfg.seed == 4 and cfg.labels == ["neg", "pos"] and cfg.triple_budget == 10
    assert cfg.train == str(tmp_path / "data" / "train.tsv")
    assert cfg.freeze_backbone_stage3 is False


@pytest.mark.parametrize("text", ["bogus = 1\n", "seed = x\n", "triple_budget = -1\n", "injector_preset = huge\n", "seed 3\n"])
def test_bad_config_is_config_error(tmp_path, text):
    with pytest.raises(ConfigError):
        RunConfig.from_file(_write(tmp_path, text))


def test_override_syntax():
    assert parse_override("lr_inject = 1e-3") == ("lr_inject", "1e-3")
    with pytest.raises(ConfigError):
        parse_override("lr_inject")


def test_budget_all_means_no_truncation():
    assert RunConfig.from_pairs([("triple_budget", "all")]).triple_budget is None


def test_fingerprint_tracks_inputs_not_locations(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        (d / "train.tsv").write_text("pos\thello\n")
    ca = RunConfig(train=str(a / "train.tsv"), run_dir=str(a / "run"))
    cb = RunConfig(train=str(b / "train.tsv"), run_dir=str(b / "run"))
    assert ca.fingerprint() == cb.fingerprint()
    (b / "train.tsv").write_text("neg\thello\n")
    assert ca.fingerprint() != cb.fingerprint()
    assert ca.fingerprint() != ca.with_overrides(lr_inject=1.0).fingerprint()
    assert ca.base_fingerprint() == ca.with_overrides(lr_inject=1.0, kg="x").base_fingerprint()


def test_serialize_round_trip(tmp_path):
    cfg = RunConfig(seed=5, labels=["a", "b"], ablation_budgets=[1, 2], triple_budget=None, dropout=0.25)
    path = _write(tmp_path, cfg.serialize())
    assert RunConfig.from_pairs(read_pairs(path)) == cfg
