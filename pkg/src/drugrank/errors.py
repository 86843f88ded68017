"""Exception types shared across the package.

The CLI maps these onto exit codes, so keep the hierarchy flat.
"""


class ShapeError(ValueError):
    """Array dimensions do not agree."""


class DomainError(ValueError):
    """Input outside the domain where an operation is defined."""


class NumericError(ArithmeticError):
    """A computation produced a non-finite value."""


class DataError(ValueError):
    """Malformed or inconsistent input file."""

    def __init__(self, message, path=None, line=None):
        self.message = message
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)

    def __reduce__(self):  # survive pickling across worker processes
        return type(self), (self.message, self.path, self.line)


class ConfigError(ValueError):
    """Invalid run configuration or missing required artifact."""


class TrainingDivergence(RuntimeError):
    """Loss became NaN/inf during optimization."""

    def __init__(self, epoch, what="training"):
        self.epoch = epoch
        self.what = what
        super().__init__(f"{what} diverged (non-finite loss) at epoch {epoch}")

    def __reduce__(self):
        return type(self), (self.epoch, self.what)
