"""Exception types shared across the package."""


class FisherDimerError(Exception):
    """Base class for all package errors."""


class DomainError(FisherDimerError, ValueError):
    """Parameters outside the admissible domain of an operation."""


class NonConvergence(FisherDimerError, RuntimeError):
    """A numerical refinement loop hit its cap before meeting tolerance."""


class CriticalSingularity(FisherDimerError, ValueError):
    """Requested an integral that diverges at the critical anisotropy."""


class SingularNode(FisherDimerError, RuntimeError):
    """The Kasteleyn matrix is numerically singular at a quadrature node."""


class OddDimension(FisherDimerError, ValueError):
    pass


class NotAntisymmetric(FisherDimerError, ValueError):
    pass


class OutOfRange(FisherDimerError, ValueError):
    """A computed probability fell outside [0, 1] beyond slack."""


class ImaginaryResidue(FisherDimerError, RuntimeError):
    """A quantity that must be real kept a significant imaginary part."""


class CoincidentPoints(FisherDimerError, ValueError):
    pass


class FitDegenerate(FisherDimerError, RuntimeError):
    pass


class InconsistentLocalState(FisherDimerError, RuntimeError):
    """Spin-to-dimer completion failed at some triangle."""


class ChainTooShort(FisherDimerError, ValueError):
    pass


class BranchFailure(FisherDimerError, RuntimeError):
    pass
