class ExportError(ValueError):
    """Base class for export failures."""


class UnmappedLayerTypeError(ExportError):
    """A host layer type has no entry in the classification table."""

    def __init__(self, type_name: str, where: str = ""):
        suffix = f" at {where}" if where else ""
        super().__init__(
            f"unmapped host layer type {type_name!r}{suffix}; "
            "add it to the classification table or restructure the model"
        )
        self.type_name = type_name


class MissingDimensionError(ExportError):
    """A config document lacks a dimension the export needs."""

    def __init__(self, key: str):
        super().__init__(f"config is missing required dimension {key!r}")
        self.key = key


class UnrecognizedArchitectureError(ExportError):
    """The config's architecture family is not supported."""


class CoverageError(ExportError):
    """Emitted layers do not account for the host model's parameters exactly."""
