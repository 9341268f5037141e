"""Exception types shared across the package."""


class PanelFormatError(ValueError):
    """Malformed panel file (ragged rows, empty body)."""


class PanelParseError(ValueError):
    """Non-numeric cell in a panel file; message carries row/column."""


class DomainError(ValueError):
    """Value outside the mathematical domain of an operation."""


class ConfigurationError(ValueError):
    """Invalid penalty or solver configuration."""


class DegenerateDirectionError(RuntimeError):
    """Zero numerator in the unit-sphere direction update."""


class NumericalRankError(ValueError):
    """Matrix is numerically rank deficient where full rank is required."""


class EstimationError(RuntimeError):
    """A direction subproblem failed; message carries the column index."""


class TuningError(RuntimeError):
    """Every tuning candidate failed."""


class BenchmarkError(RuntimeError):
    """Too many replication failures in a Monte-Carlo run."""
