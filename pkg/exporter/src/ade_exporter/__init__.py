"""Batch sentence-embedding export for the adenorm engine.

Loads a pretrained sentence-transformer (hub id or local path), encodes
a texts JSONL file, and writes the engine's embedding JSONL format. The
exporter never normalizes vectors; the consuming loader owns the
unit-norm invariant.
"""

from .exporter import (
    DuplicateIdError,
    ExporterError,
    ExportJob,
    MalformedLineError,
    ModelLoadError,
    export,
)

__version__ = "0.1.0"

__all__ = [
    "DuplicateIdError",
    "ExportJob",
    "ExporterError",
    "MalformedLineError",
    "ModelLoadError",
    "export",
]
