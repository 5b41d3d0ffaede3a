"""Exception hierarchy shared by every module of the package."""


class SeldAugError(Exception):
    """Base class for all package errors."""


# dsp / array models
class EmptyClip(SeldAugError, ValueError):
    pass


class ConfigMismatch(SeldAugError, ValueError):
    pass


class NotHermitian(SeldAugError, ValueError):
    pass


class SingularNoiseMatrix(SeldAugError, ArithmeticError):
    pass


class DomainError(SeldAugError, ValueError):
    pass


# augmentation
class FormatUnknown(SeldAugError, ValueError):
    pass


class FormatMismatch(SeldAugError, ValueError):
    pass


class LayoutMismatch(SeldAugError, ValueError):
    pass


class DegenerateInput(SeldAugError, ValueError):
    pass


class DegenerateInputWarning(UserWarning):
    """Emitted when some frequency bins carry no energy at all."""


class InsufficientSegments(SeldAugError, ValueError):
    pass


# metrics
class NoReferences(SeldAugError, ValueError):
    pass


# dataset I/O
class UnsupportedFormat(SeldAugError, ValueError):
    pass


class ChannelCountMismatch(SeldAugError, ValueError):
    pass


class MalformedRow(SeldAugError, ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class OutOfRangeClass(SeldAugError, ValueError):
    pass


# pipeline
class ConfigInvalid(SeldAugError, ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
