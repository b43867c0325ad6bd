"""Critical random-cluster models on isoradial rectangular lattices."""

from .errors import (
    ConvergenceError,
    CouplingError,
    GraphTooLargeError,
    HomotopyError,
    IsoradialError,
    LatticeError,
    ParameterError,
    TopologyError,
)
from .lattice import IsoradialLattice, Topology, TrackAngles, build_lattice, dual_lattice, mixed_angles
from .rcm import FREE, WIRED, BoundaryConditions, Configuration, exact_distribution, sample_mcmc

__version__ = "1.0.0"
