"""Exception hierarchy.

Every error carries a ``category``: ``"contract"`` for data that violates the
input contract (the CLI maps these to exit code 2) and ``"numerical"`` for
failures of a numerical procedure (exit code 3).
"""

from __future__ import annotations


class SymIndexError(Exception):
    category = "numerical"


class ContractError(SymIndexError):
    category = "contract"


class NumericalError(SymIndexError):
    category = "numerical"


class OddDimension(ContractError):
    pass


class NotSymplectic(ContractError):
    def __init__(self, residual: float):
        super().__init__(f"matrix is not symplectic (residual {residual:.3e})")
        self.residual = residual


class AsymmetricMatrix(ContractError):
    pass


class NotLagrangian(ContractError):
    pass


class NotBlockTriangular(ContractError):
    pass


class NotLinearlyStable(ContractError):
    pass


class SingularA(ContractError):
    pass


class SingularP(ContractError):
    def __init__(self, t: float):
        super().__init__(f"P(t) is singular at t={t:.6g}")
        self.t = t


class NotNonNull(ContractError):
    pass


class MissingTprime(ContractError):
    pass


class MissingCallbacks(ContractError):
    pass


class FamilyUnavailable(ContractError):
    pass


class InvalidOrbit(ContractError):
    pass


class ScenarioError(ContractError):
    pass


class IrregularCrossing(NumericalError):
    def __init__(self, t: float, detail: str = ""):
        msg = f"irregular crossing near t={t:.10g}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.t = t


class EpsExhausted(NumericalError):
    pass


class S0Exhausted(NumericalError):
    pass


class NoCylinderBlock(NumericalError):
    pass


class SplitResidualTooLarge(NumericalError):
    def __init__(self, residual: float):
        super().__init__(f"splitting residual {residual:.3e} exceeds tolerance")
        self.residual = residual


class LedgerMismatch(NumericalError):
    pass


class StageError(SymIndexError):
    """Wraps an upstream error with the pipeline stage that raised it."""

    def __init__(self, stage: str, cause: SymIndexError):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause
        self.category = cause.category
