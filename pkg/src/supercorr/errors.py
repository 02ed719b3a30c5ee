"""Exception hierarchy shared by the solvers and the command line runner."""


class SupercorrError(Exception):
    """Base class; ``exit_code`` is what the CLI returns for it."""

    exit_code = 1


class ValidationError(SupercorrError, ValueError):
    """A parameter record violates its declared constraints."""

    exit_code = 2

    def __init__(self, field: str, constraint: str):
        self.field = field
        self.constraint = constraint
        super().__init__(f"invalid '{field}': {constraint}")


class PhysicsError(SupercorrError):
    """Inputs are well formed but a physical precondition fails
    (off-resonant emitters, invalid Markov regime, no bound state...)."""

    exit_code = 3


class NumericalError(SupercorrError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""

    exit_code = 4
