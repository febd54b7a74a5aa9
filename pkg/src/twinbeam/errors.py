class TwinBeamError(Exception):
    pass


class DomainError(TwinBeamError, ValueError):
    pass


class PhaseMatchingError(TwinBeamError, ValueError):
    pass


class NormalizationError(TwinBeamError, ValueError):
    pass


class DecompositionError(TwinBeamError, RuntimeError):
    pass


class SellmeierError(TwinBeamError, ValueError):
    pass


class GridTooNarrowError(TwinBeamError, ValueError):
    pass


class ConfigError(TwinBeamError, ValueError):

    def __init__(self, message: str, issues: list[dict] | None = None):
        super().__init__(message)
        self.issues = issues or []
