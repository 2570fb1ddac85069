"""Exception types raised by isochr."""


class IsochrError(Exception):
    """Base class for all isochr errors."""


class ParameterError(IsochrError, ValueError):
    """An argument violates a documented precondition."""


class NonFiniteSampleError(IsochrError, ValueError):
    """A scalar field contains NaN or Inf."""

    def __init__(self, index: int, value: float):
        self.index = index
        self.value = value
        super().__init__(f"non-finite sample {value!r} at flat index {index}")


class RawSizeMismatchError(IsochrError, ValueError):
    """A raw file's byte size does not match dims * dtype width."""

    def __init__(self, path, expected: int, actual: int):
        self.path = path
        self.expected = expected
        self.actual = actual
        super().__init__(
            f"{path}: expected {expected} bytes for the given dims/dtype, found {actual}"
        )


class CorruptPayloadError(IsochrError, ValueError):
    """Checksum mismatch on a compressed payload."""


class UnsupportedCodecError(IsochrError, ValueError):
    """Unknown codec id in a compressed block header."""


class BadMagicError(IsochrError, ValueError):
    """A file does not start with the CHR magic."""


class VersionError(IsochrError, ValueError):
    """A CHR file has an unsupported format version."""


class ChecksumError(IsochrError, ValueError):
    """A CHR file's trailing checksum does not verify."""


class NoSuchIsovalueError(IsochrError, ValueError):
    """Requested isovalue is not among the archive's candidates."""

    def __init__(self, requested: float, candidates):
        self.requested = requested
        self.candidates = list(candidates)
        super().__init__(
            f"isovalue {requested!r} is not a stored candidate "
            f"(candidates: {self.candidates}); pass snap=True to use the nearest"
        )


class InsufficientAccuracyError(IsochrError, ValueError):
    """Requested accuracy exceeds what the archive was built with."""

    def __init__(self, requested: float, stored: float):
        self.requested = requested
        self.stored = stored
        super().__init__(
            f"requested accuracy {requested} exceeds stored accuracy {stored}; "
            f"rebuild the archive at the higher accuracy"
        )
