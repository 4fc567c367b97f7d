"""Shot-based execution: optional transpilation, noisy simulation and readout."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .circuit import Circuit, Gate
from .noise import NoiseProfile, confuse_probabilities, _depolarize, amplitude_damping_kraus, phase_damping_kraus
from .sim import (Counts, QuantumState, apply_kraus_dm, apply_unitary_dm, apply_unitary_sv, as_rng,
                  sample_from_probabilities)
from .transpiler import DEFAULT_TOPOLOGY, NativeCircuit, Topology, transpile


class Backend:
    """Simulated device.

    Circuits are transpiled to the native set on ``topology`` whenever the
    noise profile contains gate errors (so noise hits the gates the hardware
    would actually run); pass ``transpile=True/False`` to force either way.
    Density matrices are used only when a stochastic channel is present.

    Returned bitstrings list measured qubits in the order of the circuit's
    Measure gates; a circuit without Measure gates measures every logical qubit.
    """

    def __init__(self, noise: NoiseProfile | None = None, topology: Topology | None = None,
                 transpile: bool | None = None):
        self.noise = noise or NoiseProfile(label="noiseless")
        self.topology = topology or DEFAULT_TOPOLOGY
        self.transpile = self.noise.has_gate_noise if transpile is None else bool(transpile)

    @property
    def label(self) -> str:
        return self.noise.label

    def __repr__(self):
        return f"Backend({self.noise.label!r}, transpile={self.transpile})"

    # -- compilation --------------------------------------------------------
    def compile(self, circuit: Circuit, initial_layout: Sequence[int] | None = None) -> NativeCircuit:
        return transpile(circuit, self.topology, initial_layout)

    def _physical(self, circuit, initial_layout=None) -> tuple[Circuit, list[int]]:
        """Circuit to simulate plus the physical qubit behind each output bit."""
        if isinstance(circuit, NativeCircuit):
            native = circuit
        elif self.transpile:
            native = self.compile(circuit, initial_layout)
        else:
            qubits = circuit.measured_qubits or list(range(circuit.num_qubits))
            return circuit, qubits
        phys = native.circuit
        measured = phys.measured_qubits
        if not measured:
            nlog = native.num_logical or phys.num_qubits
            measured = list(native.final_layout[:nlog])
        return phys, measured

    # -- simulation -----------------------------------------------------------
    def _evolve(self, circuit: Circuit) -> tuple[QuantumState, list[int]]:
        active = sorted({q for g in circuit.gates for q in g.qubits if g.kind != "Barrier"})
        active = active or [0]
        index = {q: i for i, q in enumerate(active)}
        n = len(active)
        noise = self.noise
        density = noise.has_channels
        dim = 2**n
        if density:
            data = np.zeros((dim, dim), dtype=complex)
            data[0, 0] = 1
        else:
            data = np.zeros(dim, dtype=complex)
            data[0] = 1
        for g in circuit.gates:
            if not g.is_unitary_op:
                continue
            qs = [index[q] for q in g.qubits]
            u = noise.actual_unitary(g)
            if not density:
                data = apply_unitary_sv(data, u, qs, n)
                continue
            data = apply_unitary_dm(data, u, qs, n)
            data = _depolarize(data, noise.depolarizing_for(g), qs, n)
            if noise.amplitude_damping:
                for q in qs:
                    data = apply_kraus_dm(data, amplitude_damping_kraus(noise.amplitude_damping), [q], n)
            if noise.dephasing:
                for q in qs:
                    data = apply_kraus_dm(data, phase_damping_kraus(noise.dephasing), [q], n)
        return QuantumState(data, n), active

    def probabilities(self, circuit, initial_layout: Sequence[int] | None = None) -> np.ndarray:
        """Exact outcome distribution (including readout confusion) over the measured bits."""
        phys, measured = self._physical(circuit, initial_layout)
        state, active = self._evolve(phys)
        index = {q: i for i, q in enumerate(active)}
        k = len(measured)
        if all(q in index for q in measured):
            p = state.probabilities([index[q] for q in measured])
        else:  # untouched qubits stay in |0>
            touched = [q for q in measured if q in index]
            sub = state.probabilities([index[q] for q in touched]) if touched else np.ones(1)
            p = np.zeros(2**k)
            for i, val in enumerate(sub):
                bits = iter(format(i, f"0{len(touched)}b") if touched else "")
                s = "".join(next(bits) if q in index else "0" for q in measured)
                p[int(s, 2)] += val
        if self.noise.has_readout:
            p = confuse_probabilities(p, [self.noise.confusion(q) for q in measured])
        p = np.clip(p, 0, None)
        return p / p.sum()

    def run(self, circuit, shots: int, rng_seed=None, initial_layout: Sequence[int] | None = None) -> Counts:
        if int(shots) < 1:
            raise ValueError("shots must be >= 1")
        p = self.probabilities(circuit, initial_layout)
        return sample_from_probabilities(p, int(shots), as_rng(rng_seed))

    def measured_physical(self, circuit, initial_layout=None) -> list[int]:
        return self._physical(circuit, initial_layout)[1]


NOISELESS = Backend()


def basis_state_circuit(bits: str, num_qubits: int, qubits: Sequence[int] | None = None) -> Circuit:
    """X on the qubits whose bit is 1, then measure ``qubits`` in order."""
    qubits = list(range(len(bits))) if qubits is None else list(qubits)
    c = Circuit(num_qubits)
    for b, q in zip(bits, qubits):
        if b == "1":
            c.append(Gate("X", (q,)))
    c.measure(*qubits)
    return c
