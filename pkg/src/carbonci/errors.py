"""Exception hierarchy shared across the package."""


class CarbonCIError(Exception):
    """Base class for all errors raised by carbonci."""


# --- carbon data -----------------------------------------------------------

class MalformedRow(CarbonCIError, ValueError):
    pass


class IrregularResolution(CarbonCIError, ValueError):
    pass


class NegativeIntensity(CarbonCIError, ValueError):
    pass


class EmptyFile(CarbonCIError, ValueError):
    pass


class OutOfCoverage(CarbonCIError, LookupError):
    pass


class UnknownRegion(CarbonCIError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class ZeroOrNegativeDuration(CarbonCIError, ValueError):
    pass


class InvalidConfig(CarbonCIError, ValueError):
    pass


# --- workflow model --------------------------------------------------------

class NonPositiveDuration(CarbonCIError, ValueError):
    pass


class UnparseableDocument(CarbonCIError, ValueError):
    pass


class BadDurationLiteral(CarbonCIError, ValueError):
    pass


class UnknownRegionFormat(CarbonCIError, ValueError):
    pass


# --- estimation / scheduling -----------------------------------------------

class NoEstimateAvailable(CarbonCIError, LookupError):
    """Neither a user estimate nor any history exists for the job."""


class NoRegions(CarbonCIError, ValueError):
    pass


class InfeasibleDeadline(CarbonCIError, ValueError):
    pass


# --- simulation / service --------------------------------------------------

class EmptyTrace(CarbonCIError, ValueError):
    pass


class CoverageGap(OutOfCoverage):
    pass


class UnknownJob(CarbonCIError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)
