"""Long-run utility loss of networks with periodic demand and renewal outages."""

__version__ = "0.1.0"


class ConfigError(ValueError):
    """Invalid study configuration."""


class DataError(ValueError):
    """Unusable input data (tickets, KPIs)."""


class BudgetExceeded(RuntimeError):
    """A study needed more cycles or time than its budget allowed."""
