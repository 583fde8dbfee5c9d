"""Exception hierarchy.

Two families matter to callers: :class:`ValidationError` for bad inputs
(caught by the CLI and mapped to exit code 1) and :class:`NumericalError`
for solver failures (exit code 2).
"""


class HypercircuitError(Exception):
    """Base class for all package errors."""


class ValidationError(HypercircuitError, ValueError):
    """Input violates a documented precondition."""


class NumericalError(HypercircuitError, ArithmeticError):
    """A numerical routine failed or produced results outside tolerance."""


class DomainError(ValidationError):
    """A point lies on or outside the unit circle."""


class DegenerateGeometryError(ValidationError):
    """Two points that must be distinct coincide within tolerance."""


class CapacityError(HypercircuitError, RuntimeError):
    """Tiling generation exceeded the configured vertex budget."""


class SelectionError(ValidationError):
    """A flake face selection is empty, absent, or disconnected."""


class GraphError(ValidationError):
    """A lattice graph violates a structural requirement."""


class OddFaceError(ValidationError):
    """A plaquette has odd length, so no alternating amplitude exists."""


class CircuitError(ValidationError):
    """Invalid netlist or circuit parameters."""
