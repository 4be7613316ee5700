import json
from pathlib import Path

import pytest
import yaml

from fsilab.config import OUTPUT_DIR_ENV, Config
from fsilab.constants import ProfileName, SolverKind
from fsilab.exceptions import ConfigError

MINIMAL = {"physics": {"nu": 0.5}, "numerics": {"dt": 0.1, "t_end": 1.0}}

def test_minimal_config_fills_defaults():
    config = Config(MINIMAL)
    assert config.run.geometry.nx == 8
    assert config.run.physics.mu == 0.3
    assert config.run.numerics.solver == SolverKind.AUTO
    assert config.run.forcing.plate.g3.name == ProfileName.ZERO
    assert config.params.nu == 0.5

def test_missing_viscosity_is_reported():
    with pytest.raises(ConfigError, match="physics.nu"):
        Config({"physics": {}, "numerics": {"dt": 0.1, "t_end": 1.0}})

def test_horizon_shorter_than_one_step():
    with pytest.raises(ConfigError, match="shorter than one step"):
        Config({"physics": {"nu": 1.0}, "numerics": {"dt": 0.1, "t_end": 0.05}})

def test_poisson_ratio_range():
    with pytest.raises(ConfigError, match="physics.mu"):
        Config({"physics": {"nu": 1.0, "mu": 0.5}, "numerics": {"dt": 0.1, "t_end": 1.0}})

def test_snapshot_excludes_profiles():
    data = {**MINIMAL, "initial": {"snapshot": "final.npz", "displacement": {"w": "bump"}}}
    with pytest.raises(ConfigError, match="either from 'snapshot' or from profiles"):
        Config(data)

def test_resolutions_must_increase():
    with pytest.raises(ConfigError, match="increasing"):
        Config({**MINIMAL, "verify": {"resolutions": [16, 8]}})

def test_profile_shorthands():
    config = Config({
        **MINIMAL,
        "forcing": {"fluid": [0.0, 0.0, -1.0], "plate": {"g3": 0.25}},
        "initial": {"displacement": {"w": "bump"}},
    })
    forcing = config.run.forcing
    assert forcing.fluid.name == ProfileName.CONSTANT and forcing.fluid.value == [0.0, 0.0, -1.0]
    assert forcing.plate.g3.value == 0.25
    assert config.run.initial.displacement.w.name == ProfileName.BUMP

def test_load_yaml_and_json(tmp_path):
    yaml_path = tmp_path / "run.yaml"
    yaml_path.write_text(yaml.safe_dump(MINIMAL))
    json_path = tmp_path / "run.json"
    json_path.write_text(json.dumps(MINIMAL))
    for path in (yaml_path, str(json_path)):
        config = Config(path)
        assert config.run.numerics.dt == 0.1
        assert config.source == Path(path)

def test_empty_file(tmp_path):
    path = tmp_path / "empty.yaml"
    path.write_text("")
    with pytest.raises(ConfigError, match="is empty"):
        Config(path)

def test_non_mapping_file(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n")
    with pytest.raises(ConfigError, match="must resolve to a mapping"):
        Config(path)

def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="Cannot read config"):
        Config(tmp_path / "absent.yaml")

def test_bad_spec_type():
    with pytest.raises(ConfigError, match="filepath"):
        Config(42)

def test_output_dir_precedence(monkeypatch):
    config = Config({**MINIMAL, "diagnostics": {"output_dir": "from_config"}})
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert config.output_dir() == Path("from_config")
    monkeypatch.setenv(OUTPUT_DIR_ENV, "from_env")
    assert config.output_dir() == Path("from_env")
    assert config.output_dir("from_flag") == Path("from_flag")

def test_relative_paths_follow_config_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(MINIMAL))
    config = Config(path)
    assert config.resolve(Path("final.npz")) == tmp_path / "final.npz"
    assert Config(MINIMAL).resolve(Path("final.npz")) == Path("final.npz")
