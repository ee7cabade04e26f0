"""Exception types raised by unfoldsim."""


class UnfoldError(Exception):
    """Base class for every domain error; the CLI maps these to exit code 1."""


class DegenerateGeometry(UnfoldError, ValueError):
    def __init__(self, message, residue=None):
        if residue is not None:
            message = f"residue {residue}: {message}"
        super().__init__(message)
        self.residue = residue


class InvalidTorsion(UnfoldError, ValueError):
    pass


class ShapeMismatch(UnfoldError, ValueError):
    pass


class NearZeroTime(UnfoldError, ValueError):
    pass


class NonFiniteState(UnfoldError, FloatingPointError):
    def __init__(self, message, step=None):
        if step is not None:
            message = f"step {step}: {message}"
        super().__init__(message)
        self.step = step


class DegenerateNormalizer(UnfoldError, ZeroDivisionError):
    pass


class OutOfRange(UnfoldError, ValueError):
    pass


class MalformedRecord(UnfoldError, ValueError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class IncompleteResidue(UnfoldError, ValueError):
    def __init__(self, message, residue=None):
        if residue is not None:
            message = f"residue {residue}: {message}"
        super().__init__(message)
        self.residue = residue


class EmptyChain(UnfoldError, ValueError):
    pass


class CorruptFile(UnfoldError, IOError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersion(UnfoldError, IOError):
    def __init__(self, found, supported):
        super().__init__(
            f"trajectory format version {found} is not supported "
            f"(this build reads version {supported})"
        )
        self.found = found
        self.supported = supported


class ConfigError(UnfoldError, ValueError):
    pass
