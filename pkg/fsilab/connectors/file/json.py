import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from fsilab.connectors.base import DocumentSink
from fsilab.exceptions import OutputError

def to_jsonable(value: Any) -> Any:
    """Plain JSON types with NaN and infinities as null."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        f = float(value)
        return f if math.isfinite(f) else None
    return value

class JsonSink(DocumentSink):
    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def write(self, document: Dict[str, Any]) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "w", encoding="utf-8") as f:
                json.dump(to_jsonable(document), f, sort_keys=True, indent=2)
                f.write("\n")
        except (OSError, TypeError) as e:
            raise OutputError(f"Failed to write JSON to '{self.path}': {e}")
