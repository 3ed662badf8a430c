"""Exception hierarchy shared by all modules."""


class FrechetCLTError(Exception):
    """Base class; the CLI maps subclasses to exit code 3 (domain error)."""


class KindMismatch(FrechetCLTError):
    pass


class InvalidPoint(FrechetCLTError):
    pass


class InvalidDirection(FrechetCLTError):
    pass


class CutLocusError(FrechetCLTError):
    """Raised when a point lies inside the numerical cut-locus band.

    ``candidates`` holds the branch log vectors (ambient coordinates at the
    base point) when the manifold can enumerate them, else an empty list.
    """

    def __init__(self, message, candidates=None):
        super().__init__(message)
        self.candidates = [] if candidates is None else list(candidates)


class CutLocusData(FrechetCLTError):
    def __init__(self, message, indices):
        super().__init__(message)
        self.indices = list(indices)


class EmptyData(FrechetCLTError):
    pass


class SolverFailure(FrechetCLTError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InvalidStep(FrechetCLTError):
    pass


class NumericalInconsistency(FrechetCLTError):
    pass


class DegenerateHessian(FrechetCLTError):
    def __init__(self, message, eigenvalues=None):
        super().__init__(message)
        self.eigenvalues = [] if eigenvalues is None else list(eigenvalues)


class InvalidConfiguration(FrechetCLTError):
    pass


class ExperimentInvalid(FrechetCLTError):
    pass


class VersionError(FrechetCLTError):
    pass


class UnsupportedManifold(FrechetCLTError):
    pass
