"""deskqc: a desk-scale five-qubit workbench.

Noisy circuit simulation, a transpiler to the native R/RZ/CZ gate set on a
star topology, error mitigation, and the experiment suites built on them.
"""

from .backend import NOISELESS, Backend
from .circuit import Circuit, Gate
from .mitigation import MitigatedValue, RemCalibration, apply_rem, calibrate_rem
from .noise import NoiseProfile, bundled_profile, readout_only
from .observables import Observable, PauliString, estimate_observable, state_tomography, von_neumann_entropy
from .sim import Counts, QuantumState, run_density, run_statevector
from .transpiler import NativeCircuit, Topology, transpile

__version__ = "0.1.0"

__all__ = [
    "Backend", "NOISELESS", "Circuit", "Gate", "MitigatedValue", "RemCalibration", "apply_rem", "calibrate_rem",
    "NoiseProfile", "bundled_profile", "readout_only", "Observable", "PauliString", "estimate_observable",
    "state_tomography", "von_neumann_entropy", "Counts", "QuantumState", "run_density", "run_statevector",
    "NativeCircuit", "Topology", "transpile", "__version__",
]
