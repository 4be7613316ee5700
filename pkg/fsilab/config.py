import json
import os
from pathlib import Path
from typing import Any, Dict, Optional, Union

import yaml
from pydantic import ValidationError

from fsilab.engine.params import ModelParams
from fsilab.exceptions import ConfigError
from fsilab.schema.core import RunConfig

OUTPUT_DIR_ENV = "FSILAB_OUTPUT_DIR"

class Config:
    """
    Run configuration loaded from YAML, JSON or a dictionary.
    Wraps the underlying Pydantic `RunConfig`.
    """
    def __init__(self, spec: Union[str, Path, Dict[str, Any]]):
        self._run: RunConfig
        self.source: Optional[Path] = None

        try:
            if isinstance(spec, (str, Path)):
                self.source = Path(spec)
                data = self._load(self.source)
            elif isinstance(spec, dict):
                data = spec
            else:
                raise ConfigError(f"Config must be initialized with a filepath (str/Path) or a dictionary. Got: {type(spec)}")
            self._run = RunConfig.model_validate(data)
        except (yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigError(f"Failed to parse '{spec}': {e}")
        except OSError as e:
            raise ConfigError(f"Cannot read config '{spec}': {e}")
        except ValidationError as e:
            messages = []
            for err in e.errors():
                loc = ".".join([str(x) for x in err.get('loc', [])])
                if not loc:
                    messages.append(f"  - {{Root}}: {err.get('msg', 'Unknown error')} (Input: {err.get('input', 'N/A')})")
                else:
                    messages.append(f"  - {{{loc}}}: {err.get('msg', 'Unknown error')}")
            raise ConfigError("Invalid run configuration:\n" + "\n".join(messages))

    @staticmethod
    def _load(path: Path) -> Dict[str, Any]:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f) if path.suffix.lower() == ".json" else yaml.safe_load(f)
        if data is None:
            raise ConfigError(f"Config file '{path}' is empty.")
        if not isinstance(data, dict):
            raise ConfigError(f"Config file '{path}' must resolve to a mapping. Got: {type(data).__name__}")
        return data

    @property
    def run(self) -> RunConfig:
        return self._run

    @property
    def params(self) -> ModelParams:
        return ModelParams.from_config(self._run)

    def output_dir(self, override: Optional[Union[str, Path]] = None) -> Path:
        """--output-dir beats FSILAB_OUTPUT_DIR beats diagnostics.output_dir."""
        if override is not None:
            return Path(override)
        env = os.environ.get(OUTPUT_DIR_ENV)
        if env:
            return Path(env)
        return self._run.diagnostics.output_dir

    def resolve(self, path: Path) -> Path:
        """Relative paths inside a config file are taken relative to that file."""
        if path.is_absolute() or self.source is None:
            return path
        return self.source.parent / path
