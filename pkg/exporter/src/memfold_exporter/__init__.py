"""Exports model architectures to the memfold .mir.json IR, fail-closed."""

from .classify import classify_layer, ir_param_count, output_width
from .config_export import (
    ExportResult,
    export_config_file,
    export_from_config,
)
from .errors import (
    CoverageError,
    ExportError,
    MissingDimensionError,
    UnmappedLayerTypeError,
    UnrecognizedArchitectureError,
)
from .walk import walk_module_tree

__version__ = "0.1.0"
