"""Exceptions raised by the isoradial toolkit."""


class IsoradialError(Exception):
    """Base class for every error raised by this package."""


class LatticeError(IsoradialError, ValueError):
    """Invalid lattice description: angles, width, height, topology or index."""


class ParameterError(IsoradialError, ValueError):
    """Model parameter (q, theta, N, k, sigma ...) outside its allowed range."""


class GraphTooLargeError(IsoradialError, ValueError):
    """Exhaustive enumeration requested on a graph above the enumeration cap."""


class CouplingError(IsoradialError, ValueError):
    """Star-triangle probabilities do not normalize, or an exchange is malformed."""


class TopologyError(IsoradialError):
    """Operation not available for the lattice topology."""


class HomotopyError(IsoradialError, ValueError):
    """Loop touches a puncture or a word is malformed."""


class ConvergenceError(IsoradialError):
    """Power iteration hit its iteration cap."""
