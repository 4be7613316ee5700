from pathlib import Path
from typing import Union

import polars as pl

from fsilab.connectors.base import TableSink
from fsilab.exceptions import OutputError

class CsvSink(TableSink):
    def __init__(self, path: Union[str, Path], separator: str = ","):
        self.path = Path(path)
        self.separator = separator

    def write(self, df: pl.DataFrame) -> None:
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            df.write_csv(self.path, separator=self.separator)
        except OSError as e:
            raise OutputError(f"Failed to write CSV to '{self.path}': {e}")
