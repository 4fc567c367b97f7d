import numpy as np
import pytest
from scipy.stats import unitary_group

from deskqc.circuit import Circuit
from deskqc.sim import QuantumState, permute_qubits, run_statevector


def random_circuit(rng, n: int, depth: int) -> Circuit:
    """Mixed-gate circuit used by round-trip tests."""
    c = Circuit(n)
    kinds = ["H", "R", "RZ", "RY", "S", "X"] + (["CNOT", "CZ", "U4"] if n > 1 else [])
    for _ in range(depth):
        k = rng.choice(kinds)
        qs = [int(q) for q in rng.choice(n, 2 if n > 1 else 1, replace=False)]
        if k == "H":
            c.h(qs[0])
        elif k == "S":
            c.s(qs[0])
        elif k == "X":
            c.x(qs[0])
        elif k == "R":
            c.r(*rng.uniform(-7, 7, 2), qs[0])
        elif k == "RZ":
            c.rz(rng.uniform(-7, 7), qs[0])
        elif k == "RY":
            c.ry(rng.uniform(-7, 7), qs[0])
        elif k == "CNOT":
            c.cnot(*qs)
        elif k == "CZ":
            c.cz(*qs)
        else:
            c.unitary(unitary_group.rvs(4, random_state=int(rng.integers(2**31))), *qs)
    return c


def transpile_fidelity(c: Circuit, native, width: int = 5) -> float:
    """|<logical state mapped to physical qubits | transpiled state>|^2, frames included."""
    psi = run_statevector(native.with_frames()).data
    ref = run_statevector(Circuit(width, list(c.gates))).data
    ref = permute_qubits(QuantumState(ref, width), native.final_layout).data
    return float(abs(np.vdot(ref, psi)) ** 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
