class MissingExportError(FileNotFoundError):
    """A file the renderer needs is absent from the run directory."""


class MalformedExportError(ValueError):
    """An export file exists but does not match the documented format."""
