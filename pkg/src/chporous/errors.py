"""Exception hierarchy shared by all modules."""


class ChporousError(Exception):
    """Base class for every error raised by the package."""


class ParamError(ChporousError, ValueError):
    pass


class ValidationError(ChporousError, ValueError):
    pass


class ParseError(ChporousError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DomainError(ChporousError, ValueError):
    pass


class InclusionTouchesBoundary(ChporousError, ValueError):
    pass


class DisconnectedPore(ChporousError, ValueError):
    pass


class NonUnitFractionEpsilon(ChporousError, ValueError):
    pass


class MisalignedGrids(ChporousError, ValueError):
    pass


class NoSolidInclusion(ChporousError, ValueError):
    pass


class SingularSystem(ChporousError, ArithmeticError):
    pass


class AssumptionViolated(ChporousError):
    def __init__(self, predicate, witness, message=""):
        self.predicate = predicate
        self.witness = witness
        super().__init__(f"{predicate} violated at s={witness!r}. {message}".strip())


class LinearSolverStall(ChporousError, ArithmeticError):
    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(f"{message} (residual={residual!r})")


SolverStall = LinearSolverStall


class NewtonDivergence(ChporousError, ArithmeticError):
    def __init__(self, message, trace=()):
        self.trace = list(trace)
        super().__init__(f"{message}; residual trace: {self.trace}")


class CFLViolation(ChporousError, ArithmeticError):
    pass


class EnergyIncrease(ChporousError, ArithmeticError):
    def __init__(self, t, delta_e):
        self.t = t
        self.delta_e = delta_e
        super().__init__(f"discrete energy increased by {delta_e:.3e} at t={t:.6g}")


class ConservationError(ChporousError, ArithmeticError):
    pass
