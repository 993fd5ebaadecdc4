"""Exception hierarchy shared across the package."""


class GreenRouteError(Exception):
    """Base class for all package errors."""


class DataError(GreenRouteError):
    """Malformed or invalid input data (trace, pool, grid, estimator files)."""

    def __init__(self, message, *, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f"{':' if where else 'line '}{line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(GreenRouteError):
    """Invalid or inconsistent configuration."""


class EstimationError(GreenRouteError):
    """Estimator fitting or prediction failed."""
