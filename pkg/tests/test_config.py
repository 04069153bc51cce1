import argparse

import pytest

from jnetgait.config import apply_config, check_ranges, parse_bool, read_config, write_config
from jnetgait.errors import ConfigError


def write(tmp_path, text):
    p = tmp_path / "c.cfg"
    p.write_text(text)
    return p


def test_read_config_normalizes_and_strips_comments(tmp_path):
    p = write(tmp_path, "# header\n\nn-hd = 4   # inline\nlow_hz=0.3\n--seed = 7\n")
    assert read_config(p) == {"n_hd": "4", "low_hz": "0.3", "seed": "7"}


@pytest.mark.parametrize("text", ["just words\n", "a = 1\na = 2\n", " = 3\n"])
def test_read_config_errors(tmp_path, text):
    with pytest.raises(ConfigError):
        read_config(write(tmp_path, text))


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        read_config(tmp_path / "none.cfg")


def test_write_read_round_trip(tmp_path):
    vals = {"seed": 3, "lr": 0.001, "baseline": False, "strategy": "triple,plain", "init": None}
    write_config(vals, tmp_path / "r.cfg")
    assert read_config(tmp_path / "r.cfg") == {"seed": "3", "lr": "0.001", "baseline": "false",
                                               "strategy": "triple,plain"}


def test_parse_bool():
    assert parse_bool("Yes") and parse_bool("1") and not parse_bool("off")
    with pytest.raises(ConfigError):
        parse_bool("2")


def parser():
    p = argparse.ArgumentParser()
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--head", choices=["a", "b"], default="a")
    p.add_argument("--no-baseline", dest="baseline", action="store_false")
    return p


def test_flags_override_config():
    p = parser()
    apply_config(p, {"epochs": "9", "head": "b"}, {"epochs", "head", "baseline"})
    assert p.parse_args([]).epochs == 9
    assert p.parse_args(["--epochs", "2"]).epochs == 2


def test_config_keys_for_other_commands_ignored_unknown_rejected():
    p = parser()
    apply_config(p, {"n_hd": "3"}, {"epochs", "n_hd"})
    assert not hasattr(p.parse_args([]), "n_hd")
    with pytest.raises(ConfigError):
        apply_config(parser(), {"nope": "1"}, {"epochs"})


def test_config_type_and_choice_errors():
    with pytest.raises(ConfigError):
        apply_config(parser(), {"epochs": "many"}, {"epochs"})
    with pytest.raises(ConfigError):
        apply_config(parser(), {"head": "c"}, {"head"})


def test_store_false_key_names_destination():
    p = parser()
    apply_config(p, {"baseline": "false"}, {"baseline"})
    assert p.parse_args([]).baseline is False


def test_check_ranges():
    check_ranges({"lr": 0.01, "threshold": 1.0, "min_wear": 0.0})
    for bad in ({"lr": 0.0}, {"threshold": 0.0}, {"k_folds": 1}, {"low_hz": 5.0, "high_hz": 1.0}):
        with pytest.raises(ConfigError):
            check_ranges(bad)
