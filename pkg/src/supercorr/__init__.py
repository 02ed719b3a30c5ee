"""Super-correlated two-photon emission of emitters coupled to an attractive
photonic lattice: bound pairs, pair couplings, exact and Markovian dynamics,
collective spin models and a single-cavity realisation."""
from . import (bound_states, collective_spin, coupling, errors, exact_dynamics, master_equation,
               single_cavity)
from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["bound_states", "coupling", "errors", "exact_dynamics", "master_equation",
           "collective_spin", "single_cavity", "KERNEL_BACKEND", "__version__"]
