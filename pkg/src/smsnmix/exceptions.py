"""Exception types raised by smsnmix."""


class SmsnMixError(Exception):
    """Base class for all package errors."""


class NotPSD(SmsnMixError, ValueError):
    """A matrix that must be positive semidefinite is not."""


class NonConvergent(SmsnMixError, RuntimeError):
    """Adaptive quadrature hit its node cap without meeting tolerance."""


class MomentUndefined(SmsnMixError, ValueError):
    """A requested moment does not exist for the given hyperparameters."""


class SingularBlock(SmsnMixError, ValueError):
    """A scale sub-block is numerically singular."""


class EmptyComponent(SmsnMixError, RuntimeError):
    """A mixture component lost (almost) all of its posterior mass.

    Attributes
    ----------
    component : int
        Zero-based index of the offending component.
    mass : float
        Sum of responsibilities for that component.
    """

    def __init__(self, component, mass, minimum):
        self.component = component
        self.mass = mass
        self.minimum = minimum
        super().__init__(
            f"component {component} has posterior mass {mass:.4g} < {minimum:.4g}"
        )


class DegenerateInit(SmsnMixError, RuntimeError):
    """k-means produced a cluster too small to seed a component."""


class DataError(SmsnMixError, ValueError):
    """Malformed input data (with row/column coordinates when known)."""
