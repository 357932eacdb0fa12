"""Exception hierarchy.

Each class maps to one failure family so the CLI can pick an exit code
without string matching.
"""


class CtxSolveError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(CtxSolveError, ValueError):
    """Inputs are shaped or cross-referenced inconsistently."""


class NumericError(CtxSolveError, ArithmeticError):
    """A NaN, infinity or forbidden zero showed up in a computation."""


class ConfigError(CtxSolveError, ValueError):
    """Hyperparameters or bounds cannot be satisfied."""


class SizeError(CtxSolveError):
    """A problem is too large for the requested exact method."""


class TrainingError(CtxSolveError):
    """Fusion training diverged."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class ParseError(CtxSolveError):
    """A file could not be parsed."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(CtxSolveError):
    """A parsed collection breaks one or more invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} violation(s):\n{lines}")
