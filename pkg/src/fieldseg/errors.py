"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class FieldSegError(Exception):
    """Base class for all errors raised by fieldseg."""

    exit_code = 1


class ConfigError(FieldSegError):
    """Invalid run configuration (bad file, inconsistent options). CLI exit 2."""

    exit_code = 2


class InputError(FieldSegError):
    """Unreadable or inconsistent input data (files, dimensions). CLI exit 3."""

    exit_code = 3


class ModelError(FieldSegError):
    """Classifier training/loading/prediction failure. CLI exit 4."""

    exit_code = 4
