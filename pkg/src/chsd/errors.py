"""Exception types shared across the solver modules."""


class ChsdError(Exception):
    """Base class for all solver errors."""


# mesh
class MisalignedSplit(ChsdError):
    """Interface height does not lie on a horizontal grid line."""


class DegenerateBox(ChsdError):
    """Bounding box or region has nonpositive extent."""


# fem_core
class UnsupportedDegree(ChsdError):
    """No quadrature rule tabulated for the requested degree."""


class MeshMismatch(ChsdError):
    """Test and trial spaces live on different meshes."""


class ArityMismatch(ChsdError):
    """Kernel incompatible with the scalar/vector arity of a space."""


class DimensionMismatch(ChsdError):
    """Matrix/vector shapes are inconsistent."""


class SingularMatrix(ChsdError):
    """LU factorization hit a pivot below tolerance."""


# ch_step / stokes_darcy_step
class NewtonDiverged(ChsdError):
    """Newton iteration failed to reach the residual tolerance."""


class NonFiniteState(ChsdError):
    """A state vector contains NaN or Inf."""


class SingularSystem(ChsdError):
    """Monolithic fluid system is singular (inf-sup failure or missing constraint)."""


# analysis
class ProjectionFailed(ChsdError):
    """Projection system could not be solved."""


class NotMeanZero(ChsdError):
    """Operand of a mean-zero operator has nonzero mean."""


class ZeroField(ChsdError):
    """Norm ratio undefined for the zero field."""


class SingularMass(ChsdError):
    """Mass matrix solve failed (never expected on a valid mesh)."""


# io_cli
class ParseError(ChsdError):
    """Config text could not be parsed."""

    def __init__(self, line_no, reason):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class ValidationError(ChsdError):
    """Config value violates a documented constraint."""

    def __init__(self, key, constraint):
        super().__init__(f"{key}: {constraint}")
        self.key = key
        self.constraint = constraint
