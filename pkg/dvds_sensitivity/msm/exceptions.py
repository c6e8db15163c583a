"""Exception hierarchy shared by every app."""


class SensitivityError(Exception):
    """Base class for all errors raised by the sensitivity analysis."""


class ParameterDomainError(SensitivityError, ValueError):
    """A scalar parameter lies outside its admissible range."""


class DataError(SensitivityError, ValueError):
    """The input table cannot be turned into a valid Dataset.

    ``problems`` holds ``(row, column, message)`` triples; ``row`` is None
    for problems that concern a whole column.
    """

    def __init__(self, message, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            shown = '; '.join(
                f"row {row}, column '{column}': {text}" if row is not None
                else f"column '{column}': {text}"
                for row, column, text in self.problems[:10]
            )
            more = len(self.problems) - 10
            if more > 0:
                shown += f' (and {more} more)'
            message = f'{message}: {shown}'
        super().__init__(message)


class FitError(SensitivityError):
    """A nuisance fit failed. ``fold`` is set when the fit belonged to a fold."""

    def __init__(self, message, fold=None):
        self.detail = message
        self.fold = fold
        super().__init__(message)

    def __str__(self):
        if self.fold is None:
            return self.detail
        return f'fold {self.fold}: {self.detail}'


class DegenerateFitError(FitError):
    """The training rows cannot identify the requested nuisance."""


class ConvergenceError(FitError):
    """An iterative fit hit its iteration cap before reaching tolerance."""

    def __init__(self, message, last_iterate=None, fold=None):
        super().__init__(message, fold=fold)
        self.last_iterate = last_iterate


class EstimationError(SensitivityError):
    """Bounds or standard errors cannot be computed from the given rows."""


class HarnessError(SensitivityError):
    """A Monte Carlo coverage run lost too many replications."""


class OracleError(SensitivityError, AssertionError):
    """An exact oracle computation hit a state that valid inputs cannot reach."""
