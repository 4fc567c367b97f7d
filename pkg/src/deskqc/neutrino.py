"""Three-flavour neutrino oscillation on two qubits.

Flavour states are basis states of two qubits (big-endian):
00 -> nu_e, 01 -> nu_mu, 10 -> nu_tau, 11 -> a decoupled fictitious flavour.
The mass-basis time evolution diag(1, e^-i phi21, e^-i phi31, .) factors as
S1 (x) S2 with S1 = diag(1, e^-i phi31) on qubit 0 and S2 = diag(1, e^-i phi21)
on qubit 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .backend import Backend
from .circuit import Circuit
from .mitigation import RemCalibration, apply_rem, bootstrap_stderr, calibrate_rem
from .sim import derive_seeds, nearest_unitary

# tabulated to four decimals, hence only approximately unitary
PMNS_FOUR_DECIMALS = np.array([
    [0.8255, 0.5445, -0.142 + 0.0434j, 0],
    [-0.2709 + 0.02739j, 0.6057 + 0.0181j, 0.7475, 0],
    [0.4938 + 0.0237j, -0.5798 + 0.0157j, 0.6475, 0],
    [0, 0, 0, 1],
], dtype=complex)

PHASE_PER_EV2_KM_PER_GEV = 2.534
FLAVOURS = ("e", "mu", "tau", "x")


@dataclass(frozen=True)
class PmnsMatrix:
    u: np.ndarray = field(default_factory=lambda: PMNS_FOUR_DECIMALS.copy())

    @property
    def u_exact(self) -> np.ndarray:
        return nearest_unitary(self.u)

    @property
    def deviation(self) -> float:
        return float(np.linalg.norm(self.u - self.u_exact, 2))


@dataclass(frozen=True)
class MassSplittings:
    dm21sq: float = 7.39e-5  # eV^2
    dm31sq: float = 2.45e-3  # eV^2
    conversion: float = PHASE_PER_EV2_KM_PER_GEV

    def __post_init__(self):
        if not (self.dm31sq > self.dm21sq > 0):
            raise ValueError("need dm31sq > dm21sq > 0")


DEFAULT_PMNS = PmnsMatrix()
DEFAULT_SPLITTINGS = MassSplittings()


def evolution_phases(L_over_E: float, splittings: MassSplittings = DEFAULT_SPLITTINGS) -> tuple[float, float]:
    """(phi21, phi31) in radians for baseline-to-energy ratio L/E in km/GeV."""
    if L_over_E < 0:
        raise ValueError("L/E must be non-negative")
    k = splittings.conversion * L_over_E
    return k * splittings.dm21sq, k * splittings.dm31sq


def _evolution(phi21: float, phi31: float) -> np.ndarray:
    s1 = np.diag([1, np.exp(-1j * phi31)])
    s2 = np.diag([1, np.exp(-1j * phi21)])
    return np.kron(s1, s2)


def oscillation_circuit(L_over_E: float, pmns: PmnsMatrix = DEFAULT_PMNS,
                        splittings: MassSplittings = DEFAULT_SPLITTINGS, measure: bool = True) -> Circuit:
    """Prepare nu_mu (|01>), go to the mass basis, evolve, come back."""
    phi21, phi31 = evolution_phases(L_over_E, splittings)
    u = pmns.u_exact
    c = Circuit(2, metadata={"L_over_E": L_over_E, "nu_mu_state": "01"})
    c.x(1)
    c.unitary(u.conj().T, 0, 1)
    c.unitary(np.diag([1, np.exp(-1j * phi31)]), 0)
    c.unitary(np.diag([1, np.exp(-1j * phi21)]), 1)
    c.unitary(u, 0, 1)
    if measure:
        c.measure(0, 1)
    return c


def theoretical_probabilities(L_over_E: float, pmns: PmnsMatrix = DEFAULT_PMNS,
                              splittings: MassSplittings = DEFAULT_SPLITTINGS) -> tuple[float, float, float]:
    """(p_e, p_mu, p_tau) from the direct 4x4 matrix product."""
    u = pmns.u_exact
    amp = u @ _evolution(*evolution_phases(L_over_E, splittings)) @ u.conj().T[:, 1]
    p = np.abs(amp) ** 2
    return float(p[0]), float(p[1]), float(p[2])


@dataclass
class OscillationPoint:
    L_over_E: float
    probabilities: tuple
    stderrs: tuple
    theory: tuple
    p_x: float
    raw_probabilities: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "L_over_E": self.L_over_E,
            "p_e": self.probabilities[0], "p_mu": self.probabilities[1], "p_tau": self.probabilities[2],
            "stderr_e": self.stderrs[0], "stderr_mu": self.stderrs[1], "stderr_tau": self.stderrs[2],
            "theory_e": self.theory[0], "theory_mu": self.theory[1], "theory_tau": self.theory[2],
            "p_x": self.p_x,
        }


def default_points(n: int = 64, l_max: float = 16000.0) -> np.ndarray:
    return np.linspace(0.0, l_max, n)


def oscillation_scan(points=None, shots: int = 5000, rem: bool | RemCalibration = False,
                     backend: Backend | None = None, rng_seed=None, resamples: int = 1000,
                     cal_shots: int = 10_000) -> list[OscillationPoint]:
    """Run the oscillation circuit at each L/E, optionally with readout mitigation."""
    backend = backend or Backend()
    points = default_points() if points is None else np.asarray(points, dtype=float)
    seeds = derive_seeds(rng_seed, len(points) + 1)
    cal = rem if isinstance(rem, RemCalibration) else None
    out = []
    for le, seed in zip(points, seeds[1:]):
        circ = oscillation_circuit(float(le))
        if rem is True and cal is None:
            phys = backend.measured_physical(circ)
            cal = calibrate_rem(2, "correlated", cal_shots, backend, seeds[0], qubits=phys)
        counts = backend.run(circ, shots, seed)
        raw = counts.probabilities()
        probs = apply_rem(counts, cal) if cal is not None else raw
        errs = []
        for i in range(3):
            key = format(i, "02b")
            if cal is None:
                errs.append(bootstrap_stderr(counts, {key: 1.0}, resamples, seed))
            else:
                errs.append(bootstrap_stderr(counts, lambda c, i=i: apply_rem(c, cal)[i], resamples, seed))
        out.append(OscillationPoint(
            L_over_E=float(le),
            probabilities=tuple(float(x) for x in probs[:3]),
            stderrs=tuple(errs),
            theory=theoretical_probabilities(float(le)),
            p_x=float(probs[3]),
            raw_probabilities=tuple(float(x) for x in raw),
        ))
    return out


def first_mu_minimum(splittings: MassSplittings = DEFAULT_SPLITTINGS, l_max: float = 4000.0, n: int = 40001) -> float:
    """L/E of the first local minimum of p_mu on a dense grid."""
    grid = np.linspace(0, l_max, n)
    pm = np.array([theoretical_probabilities(x, splittings=splittings)[1] for x in grid])
    idx = np.nonzero((pm[1:-1] < pm[:-2]) & (pm[1:-1] <= pm[2:]))[0]
    return float(grid[idx[0] + 1])
