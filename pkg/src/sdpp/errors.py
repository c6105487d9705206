class ConfigError(ValueError):
    """Bad configuration: missing files, unknown names, inconsistent options."""


class BackendError(RuntimeError):
    """An extraction backend could not produce an answer (e.g. transport failure)."""
