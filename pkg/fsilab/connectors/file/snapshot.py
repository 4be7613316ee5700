import json
from pathlib import Path
from typing import Union

import numpy as np

from fsilab.connectors.base import SnapshotSink, SnapshotSource
from fsilab.constants import SNAPSHOT_FORMAT
from fsilab.engine.coupling import CoupledState
from fsilab.engine.grid import BoxGeometry
from fsilab.engine.params import ModelParams
from fsilab.engine.plate import PlateField
from fsilab.engine.stokes import FluidField
from fsilab.exceptions import OutputError, SnapshotError

FLUID_ARRAYS = ("v1", "v2", "v3", "p", "top")
PLATE_ARRAYS = ("w", "u1", "u2", "wt", "u1t", "u2t")

class NpzSnapshotSink(SnapshotSink):
    """Writes a coupled state as an .npz archive with a JSON `header` entry."""
    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def write(self, state: CoupledState, params: ModelParams) -> None:
        header = {
            "format": SNAPSHOT_FORMAT,
            "geometry": params.geometry.model_dump(),
            "time": state.time,
            "params_hash": params.params_hash(),
        }
        arrays = {name: getattr(state.fluid, name) for name in FLUID_ARRAYS}
        arrays.update({name: getattr(state.plate, name) for name in PLATE_ARRAYS})
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "wb") as f:
                np.savez(f, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
        except OSError as e:
            raise OutputError(f"Failed to write snapshot to '{self.path}': {e}")

class NpzSnapshotSource(SnapshotSource):
    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)

    def read(self, params: ModelParams) -> CoupledState:
        if not self.path.exists():
            raise SnapshotError(f"Snapshot file '{self.path}' not found.")
        try:
            with np.load(self.path, allow_pickle=False) as data:
                header = json.loads(str(data["header"]))
                fluid = FluidField(**{name: np.array(data[name]) for name in FLUID_ARRAYS})
                plate = PlateField(**{name: np.array(data[name]) for name in PLATE_ARRAYS})
        except (OSError, ValueError, KeyError) as e:
            raise SnapshotError(f"Failed to read snapshot '{self.path}': {e}")
        if header.get("format") != SNAPSHOT_FORMAT:
            raise SnapshotError(f"Snapshot '{self.path}' has format {header.get('format')!r}, expected {SNAPSHOT_FORMAT!r}.")
        stored = BoxGeometry(**header["geometry"])
        if stored != params.geometry:
            raise SnapshotError(f"Snapshot geometry {stored.model_dump()} does not match the configured {params.geometry.model_dump()}.")
        return CoupledState(fluid=fluid, plate=plate, time=float(header["time"]))
