"""Exception types shared across the package."""


class FinslerlabError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(FinslerlabError):
    """Raised when constructing an object from inconsistent data
    (e.g. a Randers drift with |beta| >= 1)."""


class DomainError(FinslerlabError):
    """Raised when a point leaves the chart domain of a surface patch."""


class NumericError(FinslerlabError):
    """Raised when an iterative numerical routine fails to converge.

    The message carries diagnostics (residuals, iteration counts) so the
    caller can decide whether to retry with different settings.
    """


class BudgetError(FinslerlabError):
    """Raised when a perturbation cannot fit inside its smallness budget."""


class CertificationError(FinslerlabError):
    """Raised when a disc fails its simplicity certificate."""


class ContactDegeneracyError(FinslerlabError):
    """Raised when a would-be contact form annihilates the Hamiltonian
    vector field at the evaluation point, so no Reeb rescaling exists."""


class TangencyError(FinslerlabError):
    """Raised when a disc transit exits tangentially to the boundary,
    where the lens map is not defined."""
