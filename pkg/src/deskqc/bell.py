"""CHSH scan, five-qubit GHZ state, Mermin polynomial and GHZ entropies."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .backend import Backend
from .circuit import Circuit
from .mitigation import MitigatedValue, RemCalibration, apply_rem, bootstrap_stderr, calibrate_rem
from .observables import (
    expectation_from_probabilities,
    measurement_circuit,
    parity_weights,
    state_tomography,
    von_neumann_entropy,
)
from .sim import derive_seeds

CLASSICAL_CHSH = 2.0
TSIRELSON = 2 * math.sqrt(2)
MERMIN_CLASSICAL = 4.0
MERMIN_QUANTUM = 16.0
GHZ_CENTER = 2

# correlator name -> (setting on qubit 0, setting on qubit 1, sign in the sum)
CHSH_TERMS = {"QS": ("X", "X", 1), "RS": ("Z", "X", 1), "RT": ("Z", "Z", 1), "QT": ("X", "Z", -1)}


def _resolve_rem(rem, backend: Backend, circuit: Circuit, num_bits: int, cal_shots: int, seed):
    if isinstance(rem, RemCalibration):
        return rem
    if rem:
        phys = backend.measured_physical(circuit)
        return calibrate_rem(num_bits, "correlated", cal_shots, backend, seed, qubits=phys)
    return None


def _parity_stat(counts, pauli: str, cal: RemCalibration | None, resamples: int, seed) -> MitigatedValue:
    """Parity expectation with bootstrap stderr, optionally after REM."""
    if cal is None:
        w = parity_weights(pauli)
        value = float(w @ counts.probabilities())
        err = bootstrap_stderr(counts, dict(zip(_bitstrings(len(pauli)), w)), resamples, seed)
        return MitigatedValue(value, err)
    value = expectation_from_probabilities(apply_rem(counts, cal), pauli)
    err = bootstrap_stderr(counts, lambda c: expectation_from_probabilities(apply_rem(c, cal), pauli), resamples, seed)
    return MitigatedValue(value, err, {"REM"})


def _bitstrings(n: int) -> list[str]:
    return ["".join(b) for b in itertools.product("01", repeat=n)]


# ---------------------------------------------------------------------------
# CHSH
# ---------------------------------------------------------------------------

def chsh_state_circuit(theta: float) -> Circuit:
    """Bell pair (|00> + |11>)/sqrt2 followed by RY(theta) on qubit 0."""
    c = Circuit(2, metadata={"theta": float(theta)})
    c.h(0).cnot(0, 1).ry(theta, 0)
    return c


def chsh_theory(theta: float) -> float:
    return TSIRELSON * math.cos(theta + math.pi / 4)


@dataclass
class ChshPoint:
    theta: float
    estimate: MitigatedValue
    theory: float
    correlators: dict = field(default_factory=dict)
    raw: MitigatedValue | None = None

    @property
    def violates(self) -> bool:
        """|S| exceeds the classical bound by more than three standard errors."""
        return abs(self.estimate.value) - CLASSICAL_CHSH > 3 * self.estimate.stderr

    def to_dict(self) -> dict:
        return {"theta": self.theta, "estimate": self.estimate.value, "stderr": self.estimate.stderr,
                "theory": self.theory, "violates": self.violates,
                "correlators": {k: v.to_dict() for k, v in self.correlators.items()},
                "methods": sorted(self.estimate.methods)}


def default_thetas(n: int = 32) -> np.ndarray:
    return np.arange(n) * 2 * math.pi / n


def chsh_scan(thetas=None, shots: int = 10_000, rem: bool | RemCalibration = False,
              backend: Backend | None = None, rng_seed=None, resamples: int = 1000,
              cal_shots: int = 10_000) -> list[ChshPoint]:
    """S(theta) = E(QS) + E(RS) + E(RT) - E(QT) with Q = X1, R = Z1 on the first
    qubit and S = X2, T = Z2 on the second."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    backend = backend or Backend()
    thetas = default_thetas() if thetas is None else np.asarray(thetas, dtype=float)
    seeds = derive_seeds(rng_seed, len(thetas) + 1)
    cal = _resolve_rem(rem, backend, measurement_circuit(chsh_state_circuit(0.0), "ZZ"), 2, cal_shots, seeds[0])
    out = []
    for theta, seed in zip(thetas, seeds[1:]):
        prep = chsh_state_circuit(theta)
        corr = {}
        raw_corr = {}
        for (name, (a, b, _)), cseed in zip(CHSH_TERMS.items(), seed.spawn(len(CHSH_TERMS))):
            counts = backend.run(measurement_circuit(prep, a + b), shots, cseed)
            corr[name] = _parity_stat(counts, a + b, cal, resamples, cseed)
            if cal is not None:
                raw_corr[name] = _parity_stat(counts, a + b, None, resamples, cseed)

        def combine(cs):
            val = sum(CHSH_TERMS[k][2] * v.value for k, v in cs.items())
            err = math.sqrt(sum(v.stderr**2 for v in cs.values()))
            return MitigatedValue(val, err, {"REM"} if cal is not None else set())

        out.append(ChshPoint(float(theta), combine(corr), chsh_theory(theta), corr,
                             combine(raw_corr) if raw_corr else None))
    return out


# ---------------------------------------------------------------------------
# GHZ
# ---------------------------------------------------------------------------

def ghz5_circuit(center: int = GHZ_CENTER) -> Circuit:
    """H on the centre qubit, then CNOT from it to every other qubit."""
    c = Circuit(5)
    c.h(center)
    for q in range(5):
        if q != center:
            c.cnot(center, q)
    return c


def ghz_statevector(n: int = 5) -> np.ndarray:
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / math.sqrt(2)
    return psi


def mermin_monomials(n: int = 5) -> list[tuple[int, str]]:
    """(sign, Pauli string) for the X/Y monomials with an even number of Y.

    For n = 5: XXXXX (+1), ten strings with two Y (-1), five with four Y (+1).
    """
    out = []
    for ny in range(0, n + 1, 2):
        sign = (-1) ** (ny // 2)
        for ys in itertools.combinations(range(n), ny):
            out.append((sign, "".join("Y" if q in ys else "X" for q in range(n))))
    return out


@dataclass
class MerminReport:
    monomials: list
    estimates: list
    aggregate: MitigatedValue
    theory: float = MERMIN_QUANTUM
    raw_aggregate: MitigatedValue | None = None
    shots_per_monomial: int = 0

    @property
    def violates_classical(self) -> bool:
        return self.aggregate.value - MERMIN_CLASSICAL > 3 * self.aggregate.stderr

    def to_dict(self) -> dict:
        d = {
            "shots_per_monomial": self.shots_per_monomial, "theory": self.theory,
            "aggregate": self.aggregate.to_dict(), "violates_classical": self.violates_classical,
            "monomials": [{"pauli": p, "sign": s, "estimate": e.value, "stderr": e.stderr}
                          for (s, p), e in zip(self.monomials, self.estimates)],
        }
        if self.raw_aggregate is not None:
            d["raw_aggregate"] = self.raw_aggregate.to_dict()
        return d


def mermin_estimate(shots_per_monomial: int = 10_000, rem: bool | RemCalibration = False,
                    backend: Backend | None = None, rng_seed=None, resamples: int = 1000,
                    cal_shots: int = 10_000) -> MerminReport:
    """Measure each of the 16 monomials on its own circuit and sum with signs."""
    backend = backend or Backend()
    monos = mermin_monomials(5)
    seeds = derive_seeds(rng_seed, len(monos) + 1)
    prep = ghz5_circuit()
    cal = _resolve_rem(rem, backend, measurement_circuit(prep, "ZZZZZ"), 5, cal_shots, seeds[0])
    ests, raws = [], []
    for (sign, pauli), seed in zip(monos, seeds[1:]):
        counts = backend.run(measurement_circuit(prep, pauli), shots_per_monomial, seed)
        ests.append(_parity_stat(counts, pauli, cal, resamples, seed))
        if cal is not None:
            raws.append(_parity_stat(counts, pauli, None, resamples, seed))

    def agg(vals):
        v = sum(s * e.value for (s, _), e in zip(monos, vals))
        err = math.sqrt(sum(e.stderr**2 for e in vals))
        return MitigatedValue(v, err, set().union(*(e.methods for e in vals)))

    return MerminReport(monos, ests, agg(ests), MERMIN_QUANTUM, agg(raws) if raws else None,
                        int(shots_per_monomial))


def ghz_fidelity(shots: int | None = 10_000, backend: Backend | None = None, rng_seed=None,
                 rem: RemCalibration | None = None) -> MitigatedValue:
    """<GHZ|rho|GHZ> from its 32 stabilizers: one Z-basis setting plus the 16 Mermin settings.

    F = (sum of the 16 even-weight Z strings + M5) / 32.  ``shots=None`` is exact.
    """
    backend = backend or Backend()
    prep = ghz5_circuit()
    monos = [(1, "ZZZZZ")] + mermin_monomials(5)
    seeds = derive_seeds(rng_seed, len(monos))
    total, var = 0.0, 0.0
    for (sign, pauli), seed in zip(monos, seeds):
        circ = measurement_circuit(prep, pauli)
        if pauli == "ZZZZZ":
            # the 16 even-weight Z strings sum to 16 on 00000 and 11111, 0 elsewhere
            w = np.zeros(32)
            w[[0, 31]] = 16.0
        else:
            w = sign * parity_weights(pauli)
        if shots is None:
            p = backend.probabilities(circ)
            p = apply_rem(p, rem) if rem is not None else p
            total += float(w @ p)
            continue
        counts = backend.run(circ, shots, seed)
        p = apply_rem(counts, rem) if rem is not None else counts.probabilities()
        total += float(w @ p)
        var += (p @ w**2 - (p @ w) ** 2) / shots
    return MitigatedValue(total / 32, math.sqrt(max(var, 0.0)) / 32, {"REM"} if rem is not None else set())


@dataclass
class GhzEntropies:
    full: float
    rho_12: float
    rho_345: float
    fidelity: float
    rho: np.ndarray
    shots_per_setting: int
    projection: str

    THEORY = {"full": 0.0, "rho_12": 1.0, "rho_345": 1.0}
    UPPER_BOUNDS = {"full": 5.0, "rho_12": 2.0, "rho_345": 3.0}

    def to_dict(self) -> dict:
        return {"shots_per_setting": self.shots_per_setting, "projection": self.projection,
                "entropies": {"full": self.full, "rho_12": self.rho_12, "rho_345": self.rho_345},
                "theory": self.THEORY, "upper_bounds": self.UPPER_BOUNDS, "fidelity": self.fidelity}


def ghz_entropies(shots_per_setting: int = 3500, backend: Backend | None = None, rng_seed=None,
                  rem: bool | RemCalibration = False, projection: str = "nearest",
                  cal_shots: int = 10_000) -> GhzEntropies:
    """Five-qubit tomography of the GHZ state and the entropies of it and two subsystems.

    Subsystem states come from partial traces of the full linear estimate,
    projected with the same method (or from the full estimate for ``mle``).
    """
    from .observables import project_density

    backend = backend or Backend()
    s_cal, s_tomo = derive_seeds(rng_seed, 2)
    prep = ghz5_circuit()
    cal = None
    if isinstance(rem, RemCalibration):
        cal = rem
    elif rem:
        # tomography uses local REM
        phys = backend.measured_physical(measurement_circuit(prep, "ZZZZZ"))
        cal = calibrate_rem(5, "local", cal_shots, backend, s_cal, qubits=phys)
    res = state_tomography(prep, range(5), shots_per_setting, backend, s_tomo, cal, projection)
    if projection == "mle":
        sub = lambda keep: _ptrace(res.rho, keep, 5)
    else:
        sub = lambda keep: project_density(_ptrace(res.rho_linear, keep, 5), projection)
    psi = ghz_statevector()
    fid = float(np.real(psi.conj() @ res.rho @ psi))
    return GhzEntropies(von_neumann_entropy(res.rho), von_neumann_entropy(sub([0, 1])),
                        von_neumann_entropy(sub([2, 3, 4])), fid, res.rho, int(shots_per_setting), projection)


def _ptrace(m: np.ndarray, keep: Sequence[int], n: int) -> np.ndarray:
    """Partial trace of a (not necessarily positive) 2^n x 2^n matrix."""
    keep = list(keep)
    t = m.reshape([2] * (2 * n))
    col = [n + q if q in keep else q for q in range(n)]  # traced indices shared with rows
    out = keep + [n + q for q in keep]
    d = 2 ** len(keep)
    return np.einsum(t, list(range(n)) + col, out).reshape(d, d)


def compare_calibrations(backends: Sequence[Backend], shots: int | None = 10_000, rng_seed=None) -> list[dict]:
    """GHZ preparation fidelity on each backend (one row per noise profile)."""
    rows = []
    for b, seed in zip(backends, derive_seeds(rng_seed, len(backends))):
        f = ghz_fidelity(shots, b, seed)
        rows.append({"label": b.label, "fidelity": f.value, "stderr": f.stderr})
    return rows
