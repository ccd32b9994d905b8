"""Exception hierarchy.

Every error class carries an ``exit_code`` used by the command line
interface, so each failure mode maps to a distinct process status.
"""


class HawkesError(Exception):
    exit_code = 2


class StabilityError(HawkesError):
    """Spectral radius of the branching matrix is not safely below one."""

    exit_code = 3


class DegenerateError(HawkesError):
    """Non-positive base rate, decay rate or grid step."""

    exit_code = 4


class ConvergenceError(HawkesError):
    exit_code = 5


class SizeError(HawkesError):
    """Requested order exceeds the enabled limit."""

    exit_code = 6


class GridError(HawkesError):
    """Query lags fall outside the tabulated renewal horizon."""

    exit_code = 7


class WindowError(HawkesError):
    """Not enough interior data for an estimator."""

    exit_code = 8


class LineageError(HawkesError):
    exit_code = 9


class ExplosionGuard(HawkesError):
    """A single cluster exceeded the configured event cap."""

    exit_code = 10


class MalformedTreeError(HawkesError):
    exit_code = 11


class BoundError(HawkesError):
    exit_code = 12


class ConfigError(HawkesError):
    exit_code = 13
