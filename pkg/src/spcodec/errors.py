"""Exception hierarchy shared by all codec modules."""


class CodecError(Exception):
    """Base class for errors raised by this package."""


class OperatorError(CodecError):
    """Raised by a differentiable operator; ``op`` names the operator."""

    def __init__(self, op, message):
        super().__init__(f"{op}: {message}")
        self.op = op


class ShapeError(OperatorError):
    pass


class NonFiniteError(OperatorError):
    pass


class FormatError(CodecError):
    """Malformed or corrupt serialized data (container, model file, image)."""


class DecodeError(FormatError):
    """Entropy-coded payload could not be decoded."""


class ChecksumError(FormatError):
    pass
