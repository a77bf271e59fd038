"""수치 라이브러리와 CLI가 공유하는 예외 계층"""


class NashStatesError(Exception):
    """모든 라이브러리 예외의 기본 클래스"""


class DimensionMismatchError(NashStatesError, ValueError):
    pass


class NonHermitianError(NashStatesError, ValueError):
    pass


class NotNashStateError(NashStatesError, ValueError):
    pass


class ResidualTooLargeError(NashStatesError, ValueError):
    pass


class TangentDimensionError(NashStatesError, ValueError):
    pass


class ProjectionPoleError(NashStatesError, ValueError):
    pass


class OffVarietyError(NashStatesError, ValueError):
    pass


class SystemKindError(NashStatesError, ValueError):
    pass


class ConfigError(NashStatesError, ValueError):
    pass


class SolverFailureError(NashStatesError):
    """Newton/추적 솔버가 수렴하지 못한 경우 (exit code 2)"""


class InvariantViolationError(NashStatesError):
    """검증 단계에서 불변식이 깨진 경우 (exit code 3)"""
