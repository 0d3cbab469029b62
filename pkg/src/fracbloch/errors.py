"""Exception hierarchy shared by all modules.

Three broad classes map onto the CLI exit codes: configuration problems
(exit 2), structured numerical-contract failures (exit 3), and solver
failures (exit 4).
"""


class FracblochError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(FracblochError):
    """Invalid or inconsistent run configuration."""


class ContractError(FracblochError):
    """A numerical contract failed in a structured, diagnosable way."""


class SolverError(FracblochError):
    """An eigensolver or time integrator failed outright."""


class GeometryError(ContractError):
    """Lattice geometry is corrupted (duality or rotation checks fail)."""


class GridError(ContractError):
    """Incompatible or non-commensurate grids."""


class NoDegeneracyError(ContractError):
    """No adjacent eigenvalue pair within the degeneracy tolerance."""


class NotIsolatedError(ContractError):
    """Degenerate pair is not isolated; possible higher multiplicity."""


class RotationEigenvalueMismatchError(ContractError):
    """Restricted rotation eigenvalues are not the expected conjugate pair."""


class DegenerateVelocityError(ContractError):
    """The velocity pairing vanishes; the cone non-degeneracy fails."""


class StructureViolationError(ContractError):
    """Symmetry-forbidden inner products exceed tolerance."""


class FitFailureError(ContractError):
    """Least-squares cone fit rejected the data as non-conical."""


class NyquistError(ContractError):
    """Envelope spectrum exceeds the allowed fraction of the micro band."""
