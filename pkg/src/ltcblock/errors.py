"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration problems exit with 2,
file problems with 3 and numeric failures with 4.
"""


class LtcBlockError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(LtcBlockError, ValueError):
    """Invalid configuration, parameter or precondition."""

    exit_code = 2


class WiringError(ConfigError):
    """Structurally invalid wiring."""


class SchemaError(ConfigError):
    """Scenario file does not conform to the CSV schema."""

    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.row = row
        self.column = column


class GenerationError(LtcBlockError):
    """Synthetic trace generation could not satisfy its constraints."""

    exit_code = 2


class NumericError(LtcBlockError, ArithmeticError):
    """Non-finite value in an input or intermediate quantity."""

    exit_code = 4

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} at step {step}")
        self.step = step
