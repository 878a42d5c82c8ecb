"""Exception types shared across the package."""


class LandscapeError(Exception):
    """Base class for domain errors; the CLI maps these to exit code 1."""


class DimensionError(LandscapeError, ValueError):
    pass


class RankDeficiencyError(LandscapeError, ValueError):
    def __init__(self, message, rank=None):
        super().__init__(message)
        self.rank = rank


class ConvergenceError(LandscapeError, RuntimeError):
    pass


class UnsupportedActivationError(LandscapeError, ValueError):
    pass


class DivergenceError(LandscapeError, FloatingPointError):
    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class SizeCapError(LandscapeError, ValueError):
    pass


class ParseError(LandscapeError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.path = path
        self.line = line
