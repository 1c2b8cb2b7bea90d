"""Exception hierarchy.

Everything raised deliberately by the package derives from `SecPrivError`,
so callers (and the CLI) can separate usage problems from numerical ones.
"""

import numpy as np


class SecPrivError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SecPrivError, ValueError):
    """Malformed, inconsistent or non-finite input."""


class NumericalError(SecPrivError):
    """A well-formed problem that has no usable numerical answer."""


class NotPositiveDefiniteError(NumericalError, np.linalg.LinAlgError):
    pass


class EmptyPencilError(NumericalError):
    """The second matrix of a pencil is zero, so no finite eigenvalue exists."""


class DegenerateSetupError(NumericalError):
    """Interconnection elimination leaves no processed measurements."""


class NoTestPossibleError(NumericalError):
    """The processed measurements carry no attack signature (q = 0)."""


class InfeasibleDesignError(NumericalError):
    pass


class UnsupportedProblemError(NumericalError):
    """Rank hypotheses of the noise-design reformulation do not hold."""
