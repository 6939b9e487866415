from typing import Optional


class NoiseAdapterError(Exception):
    '''Base class for all library errors'''


class ParameterError(NoiseAdapterError, ValueError):
    '''Argument outside its documented range'''


class InvalidProfileError(ParameterError):
    '''Device calibration profile violates a physical constraint'''


class ConfigError(NoiseAdapterError, ValueError):
    '''Run or training configuration cannot be executed'''


class InsufficientDataError(ConfigError):
    '''Not enough samples for the requested operation'''


class NumericError(NoiseAdapterError, ArithmeticError):
    '''Non-finite values or numerical drift'''


class DomainError(NoiseAdapterError, ValueError):
    '''Input is not a valid probability distribution for the metric'''


class UsageError(NoiseAdapterError, RuntimeError):
    '''API called out of order (e.g. backward without a fresh trace)'''


class DataIntegrityError(NoiseAdapterError):
    '''Persisted data is malformed or violates an invariant'''

    def __init__(self, message: str, location: Optional[str] = None):
        self.message = message
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class EmptyCountsError(DataIntegrityError):
    '''Counts map with zero shots'''
