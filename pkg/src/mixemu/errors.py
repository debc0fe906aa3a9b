"""Exception types shared across the package."""


class MixemuError(Exception):
    pass


class InvalidArgument(MixemuError, ValueError):
    pass


class StepDivergence(MixemuError, RuntimeError):
    """Inner bound-constrained solve hit its sweep cap."""

    def __init__(self, message, residual=float("nan"), step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class IncompleteRun(MixemuError, RuntimeError):
    pass


class EmptyDataset(MixemuError, ValueError):
    pass


class NotFitted(MixemuError, RuntimeError):
    pass


class RankDeficient(MixemuError, ArithmeticError):
    pass


class CapacityError(MixemuError, MemoryError):
    pass


class NumericalError(MixemuError, ArithmeticError):
    pass


class TrainingDiverged(MixemuError, RuntimeError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class UndefinedScore(MixemuError, ValueError):
    pass


class FormatError(MixemuError, ValueError):
    pass
