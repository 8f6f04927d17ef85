"""Exception hierarchy shared by every rdplab module."""


class RDPError(Exception):
    """Base class for all rdplab errors."""


class EnumerationTooLargeError(RDPError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"block space of {size} entries exceeds enumeration cap {cap}")
        self.size = size
        self.cap = cap


class InfiniteSelfInformationError(RDPError):
    pass


class MultipleStationaryDistributionsError(RDPError):
    pass


class AlphabetMismatchError(RDPError):
    pass


class DivergenceInfiniteError(RDPError):
    pass


class EmptySamplesError(RDPError, ValueError):
    pass


class ConvergenceError(RDPError):
    def __init__(self, message: str, gap: float):
        super().__init__(f"{message} (duality gap {gap:.3e})")
        self.gap = gap


class InfeasibleError(RDPError):
    pass


class BudgetExceededError(RDPError):
    pass


class DecodeError(RDPError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class ConfigError(RDPError, ValueError):
    """Malformed source, distortion, channel or grid specification."""
