"""Exception hierarchy; each pipeline failure class maps to a CLI exit code."""


class EnsembleControlError(Exception):
    exit_code = 1


class DimensionError(EnsembleControlError, ValueError):
    pass


class ModelError(EnsembleControlError, ValueError):
    """Malformed spectral data (wrong shapes, broken skew-symmetry)."""


class AssumptionError(EnsembleControlError):
    exit_code = 2

    def __init__(self, report):
        self.report = report
        super().__init__(
            "; ".join(f"{v.item}: {v.message}" for v in report.violations)
        )


class UnboundedTailError(EnsembleControlError):
    """Tail norm requested on a model with neither band limit nor finite range."""


class ToleranceUnreachable(EnsembleControlError):
    exit_code = 3


class BudgetExhausted(EnsembleControlError):
    exit_code = 4


class ValidityWindowError(EnsembleControlError):
    exit_code = 5


class PhaseAlignmentError(EnsembleControlError):
    exit_code = 6
