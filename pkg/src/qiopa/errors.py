"""Exception types shared across the package."""


class QiopaError(Exception):
    """Base class for all simulator errors."""


class CutoffOverflow(QiopaError):
    """Truncation discarded more probability mass than the strict tolerance allows."""


class CutoffMismatch(QiopaError, ValueError):
    """Two tensors with different Fock cutoffs were combined."""


class ZeroNorm(QiopaError, ValueError):
    """A state with vanishing norm cannot be normalized."""


class UnsupportedInjection(QiopaError, ValueError):
    pass


class EmptyGrid(QiopaError, ValueError):
    pass


class AllDiscarded(QiopaError):
    """No measurement record survived tie removal and filtering."""


class UnresolvableOutcome(QiopaError, ValueError):
    """A Bell outcome the physical beamsplitter analyzer cannot distinguish."""
