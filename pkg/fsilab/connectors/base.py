import abc
from typing import Any, Dict

import polars as pl

from fsilab.engine.coupling import CoupledState
from fsilab.engine.params import ModelParams

class TableSink(abc.ABC):
    """
    Destination for tabular run output (the per-step diagnostics table).
    """
    @abc.abstractmethod
    def write(self, df: pl.DataFrame) -> None:
        """
        Writes the finalized frame. Must raise `OutputError` on destination issues.
        """
        pass

class DocumentSink(abc.ABC):
    """
    Destination for JSON-like documents (run summaries, probe and verification reports).
    """
    @abc.abstractmethod
    def write(self, document: Dict[str, Any]) -> None:
        pass

class SnapshotSink(abc.ABC):
    @abc.abstractmethod
    def write(self, state: CoupledState, params: ModelParams) -> None:
        pass

class SnapshotSource(abc.ABC):
    @abc.abstractmethod
    def read(self, params: ModelParams) -> CoupledState:
        """
        Loads a coupled state for the grid described by `params`.
        Must raise `SnapshotError` when the stored grid does not match.
        """
        pass
