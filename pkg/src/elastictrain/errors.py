"""Exception types shared across the package."""


class ElasticTrainError(Exception):
    """Base class for all framework errors."""


class EmptyDataset(ElasticTrainError):
    pass


class ContractViolation(ElasticTrainError):
    """An operation ran in the wrong ownership phase."""


class InvalidMove(ElasticTrainError):
    pass


class UnknownWorker(ElasticTrainError):
    pass


class StateMissing(ElasticTrainError):
    """Per-sample solver state required but absent on a chunk."""


class InsufficientSamples(ElasticTrainError):
    pass


class NoWork(ElasticTrainError):
    pass


class IterationFailed(ElasticTrainError):
    pass


class NoHistory(ElasticTrainError):
    pass


class NoWorkersLeft(ElasticTrainError):
    pass


class TooLarge(ElasticTrainError):
    pass


class UnknownNode(ElasticTrainError):
    pass


class WorkerUnavailable(ElasticTrainError):
    pass


class ParseError(ElasticTrainError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptySet(ElasticTrainError):
    pass


class IoError(ElasticTrainError):
    pass


class ConfigError(ElasticTrainError):
    """Bad run configuration (CLI exits with status 2)."""
