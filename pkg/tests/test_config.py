"""
Test configuration loading and overrides
"""
import pytest

from timelyrec import config
from timelyrec.calendar import DEFAULT_WINDOW_RADIUS, GranularityConfig
from timelyrec.errors import InputError
from timelyrec.model import ModelConfig


def test_set_no_mutate():
    conf = {}

    new_conf = config.set_item_in_config(conf, "a.b", "c")
    assert new_conf["a"]["b"] == "c"
    assert conf == {}


def test_set_multi_level():
    conf = {}

    new_conf = config.set_item_in_config(conf, "a.b", "c")
    new_conf = config.set_item_in_config(new_conf, "a.d", "e")
    new_conf = config.set_item_in_config(new_conf, "f", "g")
    assert new_conf == {"a": {"b": "c", "d": "e"}, "f": "g"}


def test_set_overwrite():
    """
    We can overwrite already existing config items, even replacing a
    section with a leaf value.
    """
    conf = {"a": "b"}

    new_conf = config.set_item_in_config(conf, "a", "c")
    assert new_conf == {"a": "c"}

    new_conf = config.set_item_in_config(new_conf, "a.b", "d")
    assert new_conf == {"a": {"b": "d"}}


@pytest.mark.parametrize(
    "value, expected",
    [
        ("1", 1),
        ("-3", -3),
        ("1.25", 1.25),
        ("1e-05", 1e-05),
        ("true", True),
        ("FALSE", False),
        ("64,64", [64, 64]),
        ("32,", [32]),
        ("x", "x"),
        ("1x", "1x"),
        ("repeat-aware", "repeat-aware"),
        (None, None),
        ("", ""),
    ],
)
def test_parse_value(value, expected):
    assert config.parse_value(value) == expected


def test_parse_override():
    assert config.parse_override("model.window_radius.hour=3") == (
        "model.window_radius.hour",
        3,
    )
    with pytest.raises(InputError):
        config.parse_override("model.dim")
    with pytest.raises(InputError):
        config.parse_override("=3")


def test_load_defaults():
    conf = config.load_config()
    assert conf == config.default
    conf["model"]["dim"] = 1
    assert config.default["model"]["dim"] == 32


def test_load_file_and_overrides(tmpdir):
    path = tmpdir.join("config.yaml")
    path.write_text(
        """
# only what differs from the defaults
model:
  hidden: [32]
  window_radius:
    hour: 2
train:
  learning_rate: 0.01
""",
        "utf-8",
    )
    conf = config.load_config(str(path), ["train.learning_rate=0.0001", "model.dim=8"])
    assert conf["model"]["hidden"] == [32]
    assert conf["model"]["window_radius"] == {"month": 2, "day_of_week": 1, "date": 6, "hour": 2}
    assert conf["train"]["learning_rate"] == 0.0001
    assert conf["model"]["dim"] == 8
    assert type(conf["model"]["window_radius"]) is dict


def test_load_empty_file(tmpdir):
    path = tmpdir.join("config.yaml")
    path.write_text("", "utf-8")
    assert config.load_config(str(path)) == config.default


def test_load_missing_file(tmpdir):
    with pytest.raises(InputError):
        config.load_config(str(tmpdir.join("missing.yaml")))


def test_window_radius_default_shared():
    loaded = config.load_config()["model"]["window_radius"]
    assert loaded == ModelConfig(n_users=1, n_items=1).window_radius
    assert loaded == GranularityConfig().window_radius == DEFAULT_WINDOW_RADIUS
    loaded["hour"] = 0
    assert DEFAULT_WINDOW_RADIUS["hour"] == 5
    assert config.default["model"]["window_radius"]["hour"] == 5
