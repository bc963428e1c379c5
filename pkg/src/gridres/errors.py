"""Exception hierarchy shared by all gridres modules."""


class GridResError(Exception):
    """Base class for every error raised by gridres."""


# ingest

class SweepError(GridResError, ValueError):
    pass


class MalformedRow(SweepError):
    pass


class NonMonotonicFrequency(SweepError):
    pass


class DuplicateFrequency(SweepError):
    pass


class EmptySweep(SweepError):
    pass


class NonFiniteSample(SweepError):
    pass


class FrequencyOutOfRange(SweepError):
    pass


class InsufficientSnapshots(GridResError, ValueError):
    pass


class GridOutsideSweepRange(GridResError, ValueError):
    pass


# fitting

class InvalidOrder(GridResError, ValueError):
    pass


class InvalidRange(GridResError, ValueError):
    pass


class TooFewSamples(GridResError, ValueError):
    pass


class SingularSystem(GridResError, ArithmeticError):
    """Least-squares system is rank deficient (model order too high for the data)."""


class UnstablePole(GridResError, ValueError):
    pass


# network

class InvalidParams(GridResError, ValueError):
    pass


class InvalidCount(GridResError, ValueError):
    pass


class OpenCircuitEvaluation(GridResError, ArithmeticError):
    pass


class DivisionByZeroImpedance(GridResError, ArithmeticError):
    pass


class DegenerateNode(GridResError, ArithmeticError):
    pass


class DegenerateLoop(GridResError, ArithmeticError):
    def __init__(self, frequency, message=None):
        self.frequency = frequency
        super().__init__(
            message or f"series loop impedance is exactly zero at {frequency!r} Hz"
        )


# resonance

class NoResonanceFound(GridResError):
    pass


# harmonics

class SpectrumError(GridResError, ValueError):
    pass


class MissingFundamental(SpectrumError):
    pass


class ZeroFundamental(SpectrumError):
    pass


class UnsupportedCombination(GridResError, ValueError):
    pass
