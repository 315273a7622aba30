"""Exception hierarchy shared across the package."""


class VtsnnError(Exception):
    """Base class for every error raised by vtsnn."""


class InvalidWindowError(VtsnnError, ValueError):
    pass


class LayoutError(VtsnnError, ValueError):
    """A vision-only operation was given a stream or tensor without geometry."""


class ShapeError(VtsnnError, ValueError):
    pass


class ValidationError(VtsnnError, ValueError):
    pass


class ParseError(VtsnnError, ValueError):
    """Malformed file content. ``offset`` is the byte (or line) where parsing failed."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


class StratificationError(VtsnnError, ValueError):
    pass


class ConfigError(VtsnnError, ValueError):
    pass


class DivergenceError(VtsnnError, FloatingPointError):
    def __init__(self, epoch, batch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
