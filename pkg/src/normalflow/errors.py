"""Exception types shared across the package.

The CLI maps these onto exit codes: DataError -> 3, SolverError -> 4.
"""


class NormalflowError(Exception):
    """Base class for all package errors."""


class DataError(NormalflowError):
    """Malformed or inconsistent input data (files, configs, shapes)."""


class SolverError(NormalflowError):
    """Registration could not produce a usable estimate."""


class GimbalLockError(NormalflowError):
    """Euler extraction attempted at |pitch| ~ 90 degrees."""


class OutOfBoundsError(NormalflowError):
    """Physical coordinate outside the sensor grid."""


class ShapeMismatchError(DataError):
    """Grid shapes or downsampling factors do not line up."""


class RowMismatchError(DataError):
    """Two pose CSVs have different row counts."""


class ConfigError(DataError):
    """Scene/trajectory config file failed to parse or validate."""


class NoContactError(DataError):
    """A rendered pose produced an empty contact mask."""


class EmptyCloudError(DataError):
    """A tactile frame has no contact pixels to convert to points."""


class InsufficientOverlapError(SolverError):
    """Shared contact region smaller than the configured minimum."""


class DegenerateHessianError(SolverError):
    """Normal-map alignment system is rank deficient (textureless contact)."""


class DegenerateSystemError(SolverError):
    """ICP normal equations are singular (e.g. coplanar cloud)."""


class InvalidLoopError(SolverError):
    """Loop-closure constraint came from a non-converged registration."""
