"""Exception types shared across the package."""


class LocplanError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(LocplanError):
    """Invalid or inconsistent run configuration."""


class ParseError(LocplanError):
    """Malformed input file; carries file name and line number when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}"
            if line is not None:
                loc += f":{line}"
            loc = f" [{loc}]"
        super().__init__(f"{message}{loc}")
        self.path = path
        self.line = line


class SchemaVersionError(ParseError):
    """Scene file schema version does not match the supported one."""

    def __init__(self, found, expected, path=None):
        super().__init__(
            f"unsupported schema_version {found!r}, expected {expected!r}", path=path
        )
        self.found = found
        self.expected = expected


class IntegrityError(LocplanError):
    """Model content violates referential invariants (e.g. dangling track)."""


class DegenerateInputError(LocplanError):
    """Inputs are empty or otherwise unusable for the requested operation."""


class NumericError(LocplanError):
    """Non-finite values where finite ones are required."""
