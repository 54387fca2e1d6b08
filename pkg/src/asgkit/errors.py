"""Exception types shared across the package."""


class AsgKitError(Exception):
    """Base class for all errors raised by this package."""


class TripleRepeat(AsgKitError, ValueError):
    """Three identical consecutive letters cannot be encoded."""


class MalformedSequence(AsgKitError, ValueError):
    """Token sequence violates the repetition-token placement rules."""


class DimensionMismatch(AsgKitError, ValueError):
    """Array shapes are inconsistent with each other."""


class TranscriptionTooLong(AsgKitError, ValueError):
    """Transcription has more tokens than there are frames."""


class LengthMismatch(AsgKitError, ValueError):
    """Sequences were required to have equal length."""


class EmptyCorpus(AsgKitError, ValueError):
    """No usable data was supplied."""


class InvalidFactor(AsgKitError, ValueError):
    """Scaling factor must be strictly positive."""


class EmptyBeam(AsgKitError, RuntimeError):
    """No hypothesis survived the beam search; the instance is infeasible."""


class LimitExceeded(AsgKitError, ValueError):
    """Instance is too large for exhaustive enumeration."""


class NonFinite(AsgKitError, ArithmeticError):
    """A probed function value was NaN or infinite."""


class NonFiniteLoss(AsgKitError, ArithmeticError):
    """Training aborted because a loss or gradient became non-finite."""


class IdMismatch(AsgKitError, ValueError):
    """Hypothesis and reference corpora cover different utterance ids."""
