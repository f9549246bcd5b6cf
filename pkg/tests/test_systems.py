from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from errors import ConfigError
from expr import ParseError
from systems import SystemConfig, builtin_names, get_builtin, load_config, load_system

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _config(**overrides):
    data = {"name": "tiny", "dims": [1, 1], "blocks": [["u1"]]}
    data.update(overrides)
    return SystemConfig.from_dict(data)


def test_builtin_names():
    assert builtin_names() == ["chain3", "dblint", "example11", "example11-log"]
    with pytest.raises(ConfigError):
        get_builtin("lorenz")


@pytest.mark.parametrize("name", ["example11", "example11-log", "dblint", "chain3"])
def test_builtins_are_consistent(name):
    entry = get_builtin(name)
    system = entry.system
    assert system.name == name
    assert entry.x1_star.size == system.dims[0]
    assert system.t0 < entry.default_t1 < system.T
    assert [h[0].size for h in entry.anchor_hints] == list(system.dims[1:])


def test_dsl_matches_builtin_example11(rng):
    dsl = load_system(str(CONFIGS / "example11.json")).system
    native = get_builtin("example11").system
    assert dsl.name == "example11-dsl"
    assert dsl.dims == native.dims
    for _ in range(1000):
        t = rng.uniform(0.0, 1.0)
        x = rng.normal(scale=3.0, size=2) + np.array([0.0, 2.0])
        u = rng.normal(size=1)
        assert np.max(np.abs(dsl.rhs(t, x, u) - native.rhs(t, x, u))) <= 1e-12


def test_dsl_entry_keeps_anchor_defaults():
    entry = load_config(CONFIGS / "example11.json").entry()
    assert entry.default_t1 == 0.5
    assert entry.anchor_hints[0][0].tolist() == [3.0]
    assert entry.x1_star.tolist() == [0.0]


def test_chain3_config_loads(rng):
    entry = load_system(str(CONFIGS / "chain3.json"))
    native = get_builtin("chain3").system
    assert entry.system.dims == (1, 1, 2)
    assert entry.default_t1 == 0.5
    for _ in range(50):
        x, u = rng.normal(size=2), rng.normal(size=2)
        assert entry.system.rhs(0.3, x, u) == pytest.approx(native.rhs(0.3, x, u), abs=1e-12)


def test_variables_for_block():
    cfg = SystemConfig.from_dict({"dims": [1, 2, 2], "blocks": [["x2"], ["u1", "u2"]]})
    assert cfg.variables_for_block(1) == ["t", "x1", "x2", "x3"]
    assert cfg.variables_for_block(2) == ["t", "x1", "x2", "x3", "u1", "u2"]


@pytest.mark.parametrize("overrides", [
    {"dims": [1]},
    {"dims": [1, 0], "blocks": [[]]},
    {"blocks": [["u1"], ["u1"]]},
    {"blocks": [["u1", "u1"]]},
    {"dims": [2, 1, 1], "blocks": [["x3", "x3"], ["u1"]]},
])
def test_bad_configs(overrides):
    with pytest.raises(ConfigError):
        _config(**overrides).build()


def test_block_may_not_read_later_state():
    cfg = SystemConfig.from_dict({"dims": [1, 1, 1], "blocks": [["x2 + u1"], ["u1"]]})
    with pytest.raises(ParseError) as info:
        cfg.build()
    assert info.value.context["block"] == 1


def test_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        SystemConfig.from_dict({"dims": [1, 1]})
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_config(broken)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    with pytest.raises(ConfigError):
        load_system("no-such-system")


def test_config_round_trips_through_json(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({"name": "tiny", "dims": [1, 1], "blocks": [["u1 - t"]]}), encoding="utf-8")
    system = load_system(str(path)).system
    assert system.rhs(0.25, [0.0], [1.0]).tolist() == [0.75]
