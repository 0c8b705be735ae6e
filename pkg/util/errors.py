class PrognosisError(RuntimeError):
    """Base error; `exit_code` is what the CLI returns for it."""
    exit_code = 1


class UsageError(PrognosisError):
    exit_code = 1


class DataError(PrognosisError, ValueError):
    exit_code = 2


class NumericalError(PrognosisError):
    exit_code = 3

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []
