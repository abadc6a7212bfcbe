"""Exception hierarchy for the six-state simulator."""


class SixStateError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SixStateError, ValueError):
    """A setting, session parameter or CLI value cannot be used."""


class NoDataError(SixStateError, ValueError):
    """An analysis step was handed no records."""


class PulseLogError(SixStateError):
    """Base class for pulse-log ingestion failures."""


class PulseLogNotFoundError(PulseLogError, FileNotFoundError):
    """The pulse-log file does not exist."""


class MalformedHeaderError(PulseLogError, ValueError):
    """The pulse-log header does not match the schema."""


class MalformedRowError(PulseLogError, ValueError):
    """A pulse-log row has a field that cannot be parsed."""


class NonBinaryDetectorError(PulseLogError, ValueError):
    """A detector field holds something other than 0 or 1."""


class UnknownConfigLabelError(PulseLogError, ValueError):
    """A configuration label is not present in the configuration table."""

    def __init__(self, label: str):
        super().__init__(f"unknown configuration label {label!r}")
        self.label = label


class UnresolvedConfigError(SixStateError, ValueError):
    """A configuration label has no state/basis assignment."""

    def __init__(self, label: str):
        super().__init__(f"configuration {label!r} is unresolved: no named state or basis")
        self.label = label


class ConfigTableError(SixStateError, ValueError):
    """An external configuration table cannot be loaded."""
