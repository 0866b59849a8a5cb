"""Exception types raised across the package."""


class HrfnaError(ValueError):
    pass


class NotCoprime(HrfnaError):
    def __init__(self, i, j, gcd):
        super().__init__(f"moduli at positions {i} and {j} share factor {gcd}")
        self.i = i
        self.j = j
        self.gcd = gcd


class OutOfRange(HrfnaError):
    pass


class ChannelCountMismatch(HrfnaError):
    pass


class WouldWrap(HrfnaError):
    """Raised when a result could leave the centered range [-M/2, M/2]."""


class AmbiguousSign(HrfnaError):
    """The fractional estimate sits too close to the sign fold to decide."""


class EmptyInput(HrfnaError):
    pass


class LengthMismatch(HrfnaError):
    pass


class DimensionMismatch(HrfnaError):
    pass


class NonDyadicStep(HrfnaError):
    pass


class UnsupportedRhs(HrfnaError):
    pass


class ConfigError(HrfnaError):
    pass
