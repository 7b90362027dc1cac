"""Exception hierarchy shared by every module of the package."""


class RobustMeanError(Exception):
    """Base class for all errors raised by robustmean."""


class EmptyInputError(RobustMeanError, ValueError):
    pass


class DimensionError(RobustMeanError, ValueError):
    pass


class DomainError(RobustMeanError, ValueError):
    pass


class PartitionError(RobustMeanError, ValueError):
    """A block partition cannot be built for the requested (n, V)."""


class DeltaTooSmallError(PartitionError):
    """The confidence level asks for more blocks than the sample allows."""


class ConstructionError(RobustMeanError, ValueError):
    pass


class IllPosedError(RobustMeanError, ValueError):
    pass


class UnsupportedModelError(RobustMeanError, ValueError):
    pass


class InsufficientBlocksError(RobustMeanError, ValueError):
    pass


class BlockFitError(RobustMeanError):
    def __init__(self, block: int, cause: BaseException):
        super().__init__(f"fit failed on block {block}: {cause}")
        self.block = block
        self.cause = cause


class LayoutError(RobustMeanError, ValueError):
    def __init__(self, message: str, suggested_n: int | None = None):
        super().__init__(message)
        self.suggested_n = suggested_n


class ConditionError(RobustMeanError):
    """A distributional condition required by a guarantee does not hold."""

    def __init__(self, condition: str, detail: str = ""):
        msg = f"condition {condition} violated"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.condition = condition
