"""Exception hierarchy shared by all fanoise_lab modules."""


class FanoiseLabError(Exception):
    """Base class for every error raised by this package."""


class InvalidInputError(FanoiseLabError, ValueError):
    """Input data is malformed: non-finite entries, wrong shapes, bad files."""


class InvalidParameterError(FanoiseLabError, ValueError):
    """A scalar parameter is outside its admissible range."""


class ContractViolationError(FanoiseLabError):
    """A caller broke a documented precondition (e.g. un-normalized batch)."""


class DegenerateRowError(InvalidInputError):
    """A row has (near-)zero norm and cannot be normalized."""

    def __init__(self, row: int, norm: float):
        super().__init__(f"row {row} has norm {norm:.3e}, cannot normalize")
        self.row = row
        self.norm = norm


class DegenerateSpectrumError(InvalidInputError):
    """A singular-value vector is empty or contains non-positive values."""


class NumericalFailureError(FanoiseLabError, ArithmeticError):
    """An iterative numerical routine failed to converge."""


class MatrixParseError(InvalidInputError):
    """A matrix CSV file could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TrainingDivergedError(FanoiseLabError):
    """Loss became non-finite during training."""

    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss
