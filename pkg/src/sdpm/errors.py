"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class SdpmError(Exception):
    """Base class for all package errors."""


class ConfigError(SdpmError, ValueError):
    """Bad run configuration or command-line usage."""


class DatasetError(SdpmError, ValueError):
    """Malformed or unusable input data."""


class NumericError(SdpmError, ArithmeticError):
    """A non-finite value escaped where a finite one was required."""


class TrainingDiverged(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, value):
        super().__init__(f"non-finite loss {value!r} at epoch {epoch}; learning rate may be too large")
        self.epoch = epoch
        self.value = value


class ObjectiveError(NumericError):
    """The optimizer objective returned a non-finite fitness."""

    def __init__(self, generation, member, value):
        super().__init__(f"objective returned {value!r} at generation {generation}, member {member}")
        self.generation = generation
        self.member = member
        self.value = value
