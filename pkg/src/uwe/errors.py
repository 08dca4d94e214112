"""Exception types raised across the package.

Each family has a common base so callers (the CLI in particular) can map a
whole class of failures to one exit code.
"""


class UweError(Exception):
    pass


# image decoding / validation

class FormatError(UweError, ValueError):
    """Input bytes or image contents are not in an accepted form."""


class UnsupportedMagic(FormatError):
    pass


class UnsupportedMaxval(FormatError):
    pass


class Truncated(FormatError):
    pass


class MalformedHeader(FormatError):
    pass


class NonFiniteValue(FormatError):
    pass


class ImageTooSmall(FormatError):
    pass


class EmptyImage(FormatError):
    pass


class DimensionMismatch(FormatError):
    pass


class PatchTooLarge(FormatError):
    pass


# manifest

class ManifestError(FormatError):
    pass


class MalformedLine(ManifestError):
    def __init__(self, line: int, message: str = "expected 'input<TAB>reference'"):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicatePair(ManifestError):
    def __init__(self, line: int):
        super().__init__(f"line {line}: duplicate (input, reference) pair")
        self.line = line


# tensors / network

class ShapeMismatch(UweError, ValueError):
    pass


class OddDimension(ShapeMismatch):
    pass


class MisalignedDims(ShapeMismatch):
    pass


class NonFiniteTensor(UweError, ArithmeticError):
    pass


class EmptyDataset(UweError, ValueError):
    pass


class NonFiniteLoss(UweError, ArithmeticError):
    def __init__(self, step: int):
        super().__init__(f"non-finite loss at step {step}")
        self.step = step


# checkpoints

class CheckpointError(UweError, ValueError):
    pass


class BadMagic(CheckpointError):
    pass


class TruncatedCheckpoint(CheckpointError):
    pass


class ArchMismatch(CheckpointError):
    pass
