"""Exception hierarchy.

Everything raised on bad data derives from :class:`TrunetError`; the CLI maps
these to exit code 2.
"""


class TrunetError(Exception):
    pass


class InsufficientSamplesError(TrunetError, ValueError):
    pass


class ShapeError(TrunetError, ValueError):
    pass


class WeightFormatError(TrunetError, ValueError):
    pass


class BadMagicError(WeightFormatError):
    pass


class BadVersionError(WeightFormatError):
    pass


class TruncatedError(WeightFormatError):
    pass


class DuplicateNameError(WeightFormatError):
    pass


class MissingTensorError(TrunetError, KeyError):
    def __str__(self):
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ""


class WavFormatError(TrunetError, ValueError):
    pass


class QuantizationError(TrunetError, ValueError):
    pass
