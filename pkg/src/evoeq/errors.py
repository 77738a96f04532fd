"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class EvoError(Exception):
    """Base class for library errors."""


class InvalidArgument(EvoError, ValueError):
    """An argument violates a documented precondition."""


class ShapeMismatch(EvoError, ValueError):
    """Operands live on different grids, rates or dimensions."""


class NotInvertible(EvoError, ArithmeticError):
    """An operator that must be inverted is singular.

    Parameters
    ----------
    message : str
    z : complex, optional
        Offending frequency, if any.
    """

    def __init__(self, message, z=None):
        super().__init__(message)
        self.z = z


class DomainError(EvoError, ValueError):
    """Evaluation point at or left of the abscissa of boundedness."""


class NoCertificate(EvoError):
    """A sampled positivity certificate could not be established.

    Parameters
    ----------
    message : str
    witness : complex, optional
        Sample point where the positivity bound failed.
    value : float, optional
        Smallest eigenvalue observed at the witness.
    """

    def __init__(self, message, witness=None, value=None):
        super().__init__(message)
        self.witness = witness
        self.value = value


class ContractionViolation(EvoError, ValueError):
    """The weight rate is too small for the fixed-point map to contract."""


class NonConvergence(EvoError, RuntimeError):
    """An iteration exhausted its budget.

    Parameters
    ----------
    message : str
    factor : float, optional
        Last observed contraction factor.
    """

    def __init__(self, message, factor=None):
        super().__init__(message)
        self.factor = factor


class NotRegular(EvoError, ValueError):
    """Matrix pencil with identically vanishing determinant."""


class ToleranceConflict(EvoError, ValueError):
    """Eigenvalue clustering is ambiguous at the requested tolerance.

    Parameters
    ----------
    message : str
    gap : float, optional
        Ratio of the smallest kept to the largest dropped eigenvalue modulus.
    """

    def __init__(self, message, gap=None):
        super().__init__(message)
        self.gap = gap


class NumericalAmbiguity(EvoError, RuntimeError):
    """Two independent computations disagree.

    Parameters
    ----------
    message : str
    candidates : tuple, optional
    """

    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = candidates


class InconsistentInitialValue(EvoError, ValueError):
    """Initial state outside the consistent subspace.

    Parameters
    ----------
    message : str
    residual : float, optional
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UnderflowWindow(EvoError, ValueError):
    """Fit window contains samples too close to zero for a log fit."""


class Degenerate(EvoError, ValueError):
    """Operator without range (identically zero)."""


class InvalidCoefficient(EvoError, ValueError):
    """Coefficient field violates uniform positivity."""


class SingularFrequency(EvoError, ArithmeticError):
    """A per-frequency system turned out singular.

    Parameters
    ----------
    message : str
    z : complex
    sigma_min : float
    """

    def __init__(self, message, z=None, sigma_min=None):
        super().__init__(message)
        self.z = z
        self.sigma_min = sigma_min
