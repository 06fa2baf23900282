"""Exception types raised across the package."""


class TrainorError(Exception):
    pass


class DimensionError(TrainorError, ValueError):
    pass


class ContractError(TrainorError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigError(TrainorError, ValueError):
    pass


class ParseError(TrainorError, ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.line = line
        self.path = path


class SchemaError(TrainorError, ValueError):
    pass


class SamplingError(TrainorError, RuntimeError):
    pass


class InputError(TrainorError, ValueError):
    pass


class IntegrityError(TrainorError, ValueError):
    def __init__(self, section, message):
        super().__init__(f"checkpoint integrity error in {section}: {message}")
        self.section = section


class VersionError(TrainorError, ValueError):
    pass


class TrainingDiverged(TrainorError, FloatingPointError):
    """Raised when a loss component turns non-finite during training.

    ``checkpoint`` holds the last state whose losses were all finite.
    """

    def __init__(self, component, epoch, checkpoint=None):
        super().__init__(f"loss component {component} became non-finite at epoch {epoch}")
        self.component = component
        self.epoch = epoch
        self.checkpoint = checkpoint
