"""Error hierarchy for the training kit."""


class TrainkitError(Exception):
    """Base class for all trainkit failures."""


class ConfigError(TrainkitError):
    """Invalid training configuration or unusable corpus."""


class ProtocolError(TrainkitError):
    """Exchange request that cannot be answered."""
