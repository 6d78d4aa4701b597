import numpy as np
import pytest

from heatbath.config import default_config_path, describe, load_config, parse_config
from heatbath.errors import ConfigError

GOOD = """
n = 1
d = 3
beta = 2.0
C = [1.0, 0.5, 0.0]

[bath]
mode = "running-example"
theta1 = 1.0
theta2 = 0.5
varsigma = 2.0
"""


def test_default_file_is_running_example():
    cfg = load_config()
    assert cfg.spec.n == 1 and cfg.spec.d == 3
    assert np.array_equal(cfg.spec.C_mat[:, 0], [1.0, 0.5, 0.0])
    assert cfg.basis.mode == "running-example"
    assert default_config_path().name == "default.cfg"


def test_parse_good():
    cfg = parse_config(GOOD)
    assert cfg.spec.beta == 2.0
    assert describe(cfg.spec)["D"][1] == [0.0, 0.5, -2.0]


def test_general_mode():
    text = "n = 1\nd = 2\nD = [1.0, -1.0, 1.0, 1.0]\nC = [0.1, 0.2]\n[bath]\nmode = \"general\"\n"
    cfg = parse_config(text)
    assert cfg.basis.mode == "general"
    assert np.array_equal(cfg.spec.D, [[1.0, -1.0], [1.0, 1.0]])


def test_unknown_key_reports_position():
    with pytest.raises(ConfigError) as info:
        parse_config(GOOD.replace("beta = 2.0", "beta = 2.0\ngamma = 1"))
    assert info.value.line == 5 and info.value.column == 1


def test_syntax_error_reports_position():
    with pytest.raises(ConfigError) as info:
        parse_config("n = 1\nd = = 3\n")
    assert info.value.line == 2


def test_wrong_C_size():
    with pytest.raises(ConfigError) as info:
        parse_config(GOOD.replace("[1.0, 0.5, 0.0]", "[1.0, 0.5]"))
    assert "C needs 3 entries" in str(info.value)


def test_D_must_match_parameters():
    text = GOOD.replace("C =", "D = [1,0,0, 0,0.5,-2, 0,2,0.6]\nC =")
    with pytest.raises(ConfigError):
        parse_config(text)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/system.cfg")
