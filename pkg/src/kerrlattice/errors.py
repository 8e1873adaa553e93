"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DivergenceError -> 3, AnalysisError -> 4.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DivergenceError(RuntimeError):
    """Too many trajectories diverged for the ensemble to be trustworthy."""


class AnalysisError(ValueError):
    """Analysis inputs are missing, empty or mutually inconsistent."""


class SingularCovarianceError(RuntimeError):
    """Quadrature covariance could not be factorized as positive definite.

    Carries the symplectic spectrum of the offending matrix so the caller
    can see how far from physical the state drifted.
    """

    def __init__(self, message, symplectic_spectrum=None):
        super().__init__(message)
        self.symplectic_spectrum = symplectic_spectrum


class TruncationWarning(UserWarning):
    """Fock-space cutoff is visibly populated; results may be truncated."""
