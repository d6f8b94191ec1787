"""Exception hierarchy.

Every domain failure derives from :class:`WindcastError`, so the CLI can
map it to exit status 1 and print the class name on a single line.
"""


class WindcastError(Exception):
    """Base class for all domain errors."""


# series / ingestion
class SeriesTooShort(WindcastError):
    pass


class ParseError(WindcastError):
    def __init__(self, message, row=None, column=None):
        loc = []
        if row is not None:
            loc.append(f"row {row}")
        if column is not None:
            loc.append(f"column {column!r}")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)
        self.row = row
        self.column = column


class NonMonotonicTimestamps(WindcastError):
    pass


class IrregularSpacing(WindcastError):
    pass


class ValueOutOfRange(WindcastError):
    pass


class MissingChannel(WindcastError):
    pass


class LengthMismatch(WindcastError):
    pass


# analysis
class ConstantSeries(WindcastError):
    pass


class LagTooLarge(WindcastError):
    pass


class NumericalSingularity(WindcastError):
    pass


# neural
class ShapeMismatch(WindcastError):
    pass


class GraphNotBuilt(WindcastError):
    pass


class NonPositiveSigma(WindcastError):
    pass


class InvalidRate(WindcastError):
    pass


class CheckpointError(WindcastError):
    pass


# deepar / baselines
class DivergedLoss(WindcastError):
    pass


class ModelNotTrained(WindcastError):
    pass


class ModelNotFitted(WindcastError):
    pass


class CovariateHorizonMismatch(WindcastError):
    pass


class EmptyDistribution(WindcastError):
    pass


# metrics
class ZeroMeanTarget(WindcastError):
    pass


class ZeroTargetValue(WindcastError):
    pass


class ZeroTargetSum(WindcastError):
    pass


class InvalidQuantile(WindcastError):
    pass


class InvertedBounds(WindcastError):
    pass


class ZeroScalingDenominator(WindcastError):
    pass


# synthetic
class NegativeWindSpeed(WindcastError):
    pass


# pipeline / cli
class MismatchedRuns(WindcastError):
    pass


class ClampInvariantViolated(WindcastError):
    pass


class AlignmentError(WindcastError):
    pass


class ConfigError(WindcastError):
    pass
