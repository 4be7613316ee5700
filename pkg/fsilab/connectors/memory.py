from typing import Any, Dict, Optional

import polars as pl

from fsilab.connectors.base import DocumentSink, SnapshotSink, SnapshotSource, TableSink
from fsilab.engine.coupling import CoupledState
from fsilab.engine.params import ModelParams
from fsilab.exceptions import SnapshotError

class MemorySink(TableSink):
    """Traps the diagnostics table in memory. Useful for testing."""
    def __init__(self):
        self.result: Optional[pl.DataFrame] = None

    def write(self, df: pl.DataFrame) -> None:
        self.result = df

class MemoryDocumentSink(DocumentSink):
    """Traps a JSON document in memory. Useful for testing."""
    def __init__(self):
        self.result: Optional[Dict[str, Any]] = None

    def write(self, document: Dict[str, Any]) -> None:
        self.result = document

class MemorySnapshot(SnapshotSink, SnapshotSource):
    """Keeps the last written state together with the hash of its parameters."""
    def __init__(self):
        self.state: Optional[CoupledState] = None
        self.params_hash: Optional[str] = None

    def write(self, state: CoupledState, params: ModelParams) -> None:
        self.state = state
        self.params_hash = params.params_hash()

    def read(self, params: ModelParams) -> CoupledState:
        if self.state is None:
            raise SnapshotError("No snapshot has been written to memory.")
        if self.state.plate.w.shape != (params.geometry.nx + 1, params.geometry.ny + 1):
            raise SnapshotError("Stored snapshot does not match the configured grid.")
        return self.state
