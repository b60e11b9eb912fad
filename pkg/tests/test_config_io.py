import json
import math

import numpy as np
import pytest

from slowfast_srde.config import load_config, parse_config, preset_names
from slowfast_srde.io import (MAGIC, dumps, read_container, read_table, table_body, write_container,
                              write_table)
from slowfast_srde.model import ConfigError

BASE = {
    "domain": {"length": "2pi", "boundary": "neumann"},
    "eigensystem": {"slow_modes": 4, "fast_modes": 2},
    "covariance1": {"lambdas": [1.0, 0.5]},
    "coefficients": {"b1": {"kind": "tanh", "x_coef": -1.0, "amp": 0.5},
                     "b2": {"kind": "linear", "x_coef": 0.5, "y_coef": -0.5},
                     "sigma1": {"kind": "constant", "value": 1.0},
                     "sigma2": {"kind": "constant", "value": 1.0}},
    "regime": {"epsilons": [0.1, 0.01], "Delta_scale": 0.5, "Delta_power": 1 / 3},
    "initial": {"X0": [1.0]},
    "averaging": {"T": 2.0},
}


def test_parse_full_config():
    cfg = parse_config(BASE, "inline")
    m = cfg.model
    assert m.sys1.domain_length == pytest.approx(2 * math.pi)
    assert m.sys1.boundary_kind == "neumann" and m.sys1.mass_shift == 1.0
    np.testing.assert_allclose(m.cov1.lambdas, [1.0, 0.5, 0.0, 0.0])
    np.testing.assert_allclose(cfg.X0, [1.0, 0, 0, 0])
    e = cfg.schedule[1]
    assert (e.epsilon, e.delta) == (0.01, 0.01)
    assert e.Delta == pytest.approx(0.5 * 0.01 ** (1 / 3))
    assert e.dt == pytest.approx(0.01**2 / 20)
    assert cfg.section("averaging") == {"T": 2.0} and cfg.section("missing") == {}


@pytest.mark.parametrize("patch", [
    {"domain": {"length": "e"}},
    {"domain": {"lenght": 3.0}},
    {"eigensystem": {}},
    {"coefficients": {"b1": {"kind": "tanh"}}},
    {"regime": {"delta_scale": 1.0}},
    {"rng": {"seed": -1}},
    {"covariance2": {"coupling": "identical"}},
])
def test_bad_configs(patch):
    data = {**BASE, **patch}
    with pytest.raises(ConfigError):
        parse_config(data)


def test_presets_load():
    assert {"tanh", "linear", "ou", "ou1"} <= set(preset_names())
    for name in preset_names():
        cfg = load_config(f"preset:{name}")
        assert cfg.model.sys1.mode_count >= 1
    with pytest.raises(ConfigError):
        load_config("preset:nope")
    with pytest.raises(ConfigError):
        load_config("/nonexistent/file.toml")


def test_load_from_file(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("[domain\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_table_round_trip(tmp_path):
    p = write_table(tmp_path / "t.csv", "demo", ["a", "b"], [(1, 0.1), (2, float("nan"))],
                    {"x": np.arange(2), "inf": math.inf})
    kind, cols, rows = read_table(p)
    assert kind == "demo" and cols == ["a", "b"] and rows == [["1", "0.1"], ["2", "nan"]]
    assert table_body(p) == "a,b\n1,0.1\n2,nan\n"
    meta = json.loads((tmp_path / "t.csv.meta.json").read_text())
    assert meta == {"x": [0, 1], "inf": "inf"}


def test_container_round_trip(tmp_path):
    arrays = {"a": np.arange(6.0).reshape(2, 3), "b": np.array([1, 2], dtype=np.int32),
              "c": np.array([True, False])}
    p = write_container(tmp_path / "c.sfc", arrays, {"note": "x"})
    assert p.read_bytes().startswith(MAGIC)
    out, meta = read_container(p)
    assert meta == {"note": "x"}
    for k, v in arrays.items():
        np.testing.assert_array_equal(out[k], v)
        assert out[k].dtype == v.dtype
    (tmp_path / "junk").write_bytes(b"nope")
    with pytest.raises(ValueError):
        read_container(tmp_path / "junk")


def test_dumps_is_strict_json():
    text = dumps({"a": math.inf, "b": [math.nan, 1.0], "c": np.float64(-math.inf)})
    assert json.loads(text) == {"a": "inf", "b": ["nan", 1.0], "c": "-inf"}
