from fsilab.connectors.base import DocumentSink, SnapshotSink, SnapshotSource, TableSink

from fsilab.connectors.file.csv import CsvSink
from fsilab.connectors.file.json import JsonSink
from fsilab.connectors.file.snapshot import NpzSnapshotSink, NpzSnapshotSource
from fsilab.connectors.memory import MemoryDocumentSink, MemorySink, MemorySnapshot

__all__ = [
    "TableSink", "DocumentSink", "SnapshotSink", "SnapshotSource",
    "CsvSink", "JsonSink",
    "NpzSnapshotSink", "NpzSnapshotSource",
    "MemorySink", "MemoryDocumentSink", "MemorySnapshot",
]
