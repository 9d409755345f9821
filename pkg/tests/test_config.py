import pytest

from tcgan.config import (
    CONFIG_KEYS,
    ConfigError,
    defaults,
    emit_config,
    parse_config,
    to_train_config,
)


def test_defaults_cover_every_key():
    cfg = parse_config("")
    assert set(cfg) == set(CONFIG_KEYS)


def test_parse_values_and_comments():
    cfg = parse_config(
        """
        # a comment
        stages = 3
        lr = 2e-3   # inline comment
        deterministic = false
        image = photos/cat.png
        """
    )
    assert cfg["stages"] == 3
    assert cfg["lr"] == 2e-3
    assert cfg["deterministic"] is False
    assert cfg["image"] == "photos/cat.png"


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown key 'turbo'"):
        parse_config("turbo = yes")


def test_bad_value_reports_line():
    with pytest.raises(ConfigError, match="line 2"):
        parse_config("stages = 3\niters = many")


def test_missing_equals_rejected():
    with pytest.raises(ConfigError, match="key=value"):
        parse_config("stages 3")


def test_roundtrip_is_identity():
    cfg = parse_config("stages = 4\nrec_weight = 7.5\nfeather = true")
    again = parse_config(emit_config(cfg))
    assert again == cfg
    assert parse_config(emit_config(again)) == again


def test_to_train_config_applies_settings():
    cfg = parse_config("stages = 4\nseed = 9\nprecision = f64")
    tc = to_train_config(cfg)
    assert tc.stages == 4
    assert tc.seed == 9
    assert tc.dtype.__name__ == "float64"


def test_to_train_config_validates():
    with pytest.raises(ValueError, match="stages"):
        to_train_config(parse_config("stages = 1"))


def test_every_key_documented():
    for key, (_, _, doc) in CONFIG_KEYS.items():
        assert doc, f"{key} lacks documentation"
    text = emit_config(defaults())
    for key in CONFIG_KEYS:
        assert key in text
