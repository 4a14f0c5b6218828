"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map it without a lookup
table: 2 for configuration problems, 3 for numeric precondition failures,
4 for bound violations under ``--strict``.
"""

from __future__ import annotations


class AsymDiagError(Exception):
    exit_code = 3
    kind = "error"

    def record(self) -> dict:
        return {"error": self.kind, "message": str(self), "exit_code": self.exit_code}


class InvalidInputError(AsymDiagError, ValueError):
    kind = "invalid-input"


class InvalidParameterError(AsymDiagError, ValueError):
    kind = "invalid-parameter"


class DimensionMismatchError(AsymDiagError, ValueError):
    kind = "dim-mismatch"


class ContractViolation(AsymDiagError):
    kind = "contract-violation"


class SingularMatrixError(AsymDiagError):
    kind = "singular-matrix"


class NoUniqueSolutionError(SingularMatrixError):
    kind = "no-unique-solution"


class ContourHitsSpectrumError(SingularMatrixError):
    kind = "contour-hits-spectrum"


class StepFailureError(AsymDiagError):
    kind = "step-failure"

    def __init__(self, message: str, node: int | None = None):
        super().__init__(message)
        self.node = node


class DivergenceError(AsymDiagError):
    kind = "divergence"


class FrameInvariantError(AsymDiagError):
    kind = "frame-invariant"


class SeparationError(FrameInvariantError):
    kind = "separation-destroyed-by-smoothing"


class MagnitudeTooSmallError(FrameInvariantError):
    kind = "magnitude-too-small"

    def __init__(self, message: str, min_magnitude: float):
        super().__init__(message)
        self.min_magnitude = min_magnitude

    def record(self) -> dict:
        rec = super().record()
        rec["min_magnitude"] = self.min_magnitude
        return rec


class SectorError(AsymDiagError, ValueError):
    kind = "lambda-outside-sector"


class BoundViolation(AsymDiagError):
    kind = "bound-violation"
    exit_code = 4


class ConfigError(AsymDiagError, ValueError):
    kind = "config"
    exit_code = 2


class ExprSyntaxError(ConfigError):
    kind = "syntax"

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset

    def record(self) -> dict:
        rec = super().record()
        rec["offset"] = self.offset
        return rec


class UnknownIdentifierError(ExprSyntaxError):
    kind = "unknown-identifier"


class DomainError(AsymDiagError, ValueError):
    kind = "domain"
