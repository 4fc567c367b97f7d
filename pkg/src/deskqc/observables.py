"""Pauli observables, shot-based expectation estimation, grouping and state tomography."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np

from .backend import Backend
from .circuit import H, PAULIS, Circuit, Gate
from .mitigation import MitigatedValue, RemCalibration, apply_rem, rem_linear_stderr
from .sim import Counts, QuantumState, as_rng, derive_seeds

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Pauli strings and observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PauliString:
    ops: str

    def __post_init__(self):
        ops = str(self.ops).upper()
        if not ops or set(ops) - set("IXYZ"):
            raise ValueError(f"invalid Pauli string {self.ops!r}")
        object.__setattr__(self, "ops", ops)

    def __len__(self):
        return len(self.ops)

    def __str__(self):
        return self.ops

    @property
    def support(self) -> list[int]:
        return [i for i, c in enumerate(self.ops) if c != "I"]

    @property
    def is_identity(self) -> bool:
        return not self.support

    def matrix(self) -> np.ndarray:
        return reduce(np.kron, [PAULIS[c] for c in self.ops])

    @classmethod
    def from_sparse(cls, n: int, letters: dict[int, str]) -> "PauliString":
        """PauliString.from_sparse(4, {0: "X", 1: "X"}) -> XXII."""
        return cls("".join(letters.get(i, "I") for i in range(n)))


def _as_pauli(p) -> PauliString:
    return p if isinstance(p, PauliString) else PauliString(p)


class Observable:
    """Real-weighted sum of Pauli strings of a common length."""

    def __init__(self, terms: Iterable[tuple[float, PauliString | str]] = (), num_qubits: int | None = None):
        self.terms: list[tuple[float, PauliString]] = []
        for c, p in terms:
            c = float(c)
            if not math.isfinite(c):
                raise ValueError("coefficients must be finite")
            self.terms.append((c, _as_pauli(p)))
        widths = {len(p) for _, p in self.terms}
        if len(widths) > 1:
            raise ValueError("all Pauli strings must have the same length")
        self.num_qubits = widths.pop() if widths else int(num_qubits or 0)

    def simplify(self, drop_zeros: bool = False) -> "Observable":
        """Merge duplicate strings (first-appearance order kept)."""
        acc: dict[str, float] = {}
        for c, p in self.terms:
            acc[p.ops] = acc.get(p.ops, 0.0) + c
        terms = [(c, PauliString(s)) for s, c in acc.items() if not (drop_zeros and c == 0)]
        return Observable(terms, self.num_qubits)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __mul__(self, k: float) -> "Observable":
        return Observable([(k * c, p) for c, p in self.terms], self.num_qubits)

    __rmul__ = __mul__

    @property
    def constant(self) -> float:
        return sum(c for c, p in self.terms if p.is_identity)

    def is_zero(self, atol: float = 0.0) -> bool:
        return all(abs(c) <= atol for c, _ in self.simplify().terms)

    def coefficient(self, ops: str) -> float:
        return sum(c for c, p in self.terms if p.ops == ops)

    def matrix(self) -> np.ndarray:
        dim = 2**self.num_qubits
        m = np.zeros((dim, dim), dtype=complex)
        for c, p in self.terms:
            m += c * p.matrix()
        return m

    def expectation(self, state: QuantumState | np.ndarray) -> float:
        """Exact <O> on a statevector or density matrix."""
        data = state.data if isinstance(state, QuantumState) else np.asarray(state)
        m = self.matrix()
        if data.ndim == 1:
            return float(np.real(np.vdot(data, m @ data)))
        return float(np.real(np.trace(m @ data)))

    def to_list(self) -> list[list]:
        return [[c, p.ops] for c, p in self.terms]

    @classmethod
    def from_list(cls, items) -> "Observable":
        return cls([(c, p) for c, p in items])

    def __repr__(self):
        return " + ".join(f"{c:g}*{p.ops}" for c, p in self.terms) or "0"


# ---------------------------------------------------------------------------
# measurement in Pauli bases
# ---------------------------------------------------------------------------

def basis_change(pauli: PauliString | str, qubits: Sequence[int] | None = None,
                 num_qubits: int | None = None) -> Circuit:
    """Rotations mapping each letter's eigenbasis onto Z: H for X, Sdg then H for Y."""
    pauli = _as_pauli(pauli)
    qubits = list(range(len(pauli))) if qubits is None else list(qubits)
    c = Circuit(num_qubits or max(max(qubits) + 1, len(pauli)))
    for q, letter in zip(qubits, pauli.ops):
        if letter == "X":
            c.h(q)
        elif letter == "Y":
            c.sdg(q)
            c.h(q)
    return c


def measurement_circuit(prep: Circuit, setting: PauliString | str, qubits: Sequence[int] | None = None) -> Circuit:
    """``prep`` followed by the basis change for ``setting`` on ``qubits`` and their measurement."""
    setting = _as_pauli(setting)
    qubits = list(range(len(setting))) if qubits is None else list(qubits)
    if len(qubits) != len(setting):
        raise ValueError("setting length must match the measured qubits")
    c = prep.without_measurements()
    c.extend(basis_change(setting, qubits, prep.num_qubits).gates)
    c.measure(*qubits)
    return c


def parity_weights(pauli: PauliString | str, num_bits: int | None = None) -> np.ndarray:
    """(-1)^(parity of bits on the string's support), for every bitstring index."""
    pauli = _as_pauli(pauli)
    n = num_bits or len(pauli)
    if n != len(pauli):
        raise ValueError(f"Pauli string {pauli} does not match {n} measured bits")
    idx = np.arange(2**n)
    mask = sum(1 << (n - 1 - q) for q in pauli.support)
    par = np.array([bin(i & mask).count("1") & 1 for i in idx])
    return 1.0 - 2.0 * par


def expectation_from_probabilities(p: np.ndarray, pauli: PauliString | str) -> float:
    p = np.asarray(p, dtype=float)
    return float(parity_weights(pauli, int(round(math.log2(p.size)))) @ p)


def expectation_from_counts(counts: Counts, pauli: PauliString | str) -> float:
    """Mean of (-1)^parity over shots; counts must come from the matching basis change."""
    pauli = _as_pauli(pauli)
    if counts.num_bits != len(pauli):
        raise ValueError(f"counts have {counts.num_bits} bits, Pauli string has {len(pauli)}")
    total = 0
    for bits, c in counts.items():
        par = sum(bits[q] == "1" for q in pauli.support) & 1
        total += -c if par else c
    return total / counts.shots


def linear_statistic(pauli_terms: Sequence[tuple[float, PauliString]], num_bits: int) -> dict[str, float]:
    """Bitstring weights of sum_t c_t (-1)^parity_t (for vectorized bootstrap)."""
    w = np.zeros(2**num_bits)
    for c, p in pauli_terms:
        w += c * parity_weights(p, num_bits)
    return {format(i, f"0{num_bits}b"): float(v) for i, v in enumerate(w)}


# ---------------------------------------------------------------------------
# qubit-wise commuting groups
# ---------------------------------------------------------------------------

@dataclass
class MeasurementSetting:
    letters: list[str]  # "I" marks a free position
    terms: list[int] = field(default_factory=list)

    @property
    def label(self) -> str:
        """Basis label with free positions measured in Z."""
        return "".join(c if c != "I" else "Z" for c in self.letters)

    def accepts(self, p: PauliString) -> bool:
        return all(a == "I" or b == "I" or a == b for a, b in zip(self.letters, p.ops))

    def add(self, idx: int, p: PauliString) -> None:
        self.letters = [b if a == "I" else a for a, b in zip(self.letters, p.ops)]
        self.terms.append(idx)


def group_qubitwise(obs: Observable) -> list[MeasurementSetting]:
    """Greedy first-fit grouping; identity terms join the first setting."""
    settings: list[MeasurementSetting] = []
    identity: list[int] = []
    for i, (_, p) in enumerate(obs.terms):
        if p.is_identity:
            identity.append(i)
            continue
        for s in settings:
            if s.accepts(p):
                s.add(i, p)
                break
        else:
            s = MeasurementSetting(["I"] * obs.num_qubits)
            s.add(i, p)
            settings.append(s)
    if identity:
        if not settings:
            settings.append(MeasurementSetting(["I"] * obs.num_qubits))
        settings[0].terms = identity + settings[0].terms
    return settings


@dataclass
class SettingResult:
    label: str
    counts: Counts | None
    value: float
    stderr: float


def estimate_observable(prep: Circuit, obs: Observable, shots: int | None, backend: Backend | None = None,
                        rng_seed=None, rem: RemCalibration | None = None,
                        qubits: Sequence[int] | None = None) -> MitigatedValue:
    """Estimate <obs> on the state prepared by ``prep`` using grouped settings.

    ``shots=None`` evaluates each setting's exact outcome distribution (the
    infinite-shot limit, still including the backend's noise).  With ``rem``
    the per-setting distributions are mitigated before averaging.
    """
    backend = backend or Backend()
    qubits = list(range(obs.num_qubits)) if qubits is None else list(qubits)
    groups = group_qubitwise(obs)
    seeds = derive_seeds(rng_seed, len(groups))
    value, var = 0.0, 0.0
    for g, seed in zip(groups, seeds):
        w = np.zeros(2**obs.num_qubits)
        for i in g.terms:
            c, p = obs.terms[i]
            w += c * parity_weights(p)
        circ = measurement_circuit(prep, g.label, qubits)
        if shots is None:
            p = backend.probabilities(circ)
            if rem is not None:
                p = apply_rem(p, rem)
            value += float(w @ p)
            continue
        counts = backend.run(circ, shots, seed)
        if rem is not None:
            p = apply_rem(counts, rem)
            var += rem_linear_stderr(counts, rem, w) ** 2
        else:
            p = counts.probabilities()
            var += (p @ w**2 - (p @ w) ** 2) / counts.shots
        value += float(w @ p)
    tags = {"REM"} if rem is not None else set()
    return MitigatedValue(value, math.sqrt(max(var, 0.0)), tags)


# ---------------------------------------------------------------------------
# tomography and entropy
# ---------------------------------------------------------------------------

@dataclass
class TomographyResult:
    rho: np.ndarray
    rho_linear: np.ndarray
    settings_used: list[str]
    shots_per_setting: int
    qubits: list[int]

    @property
    def state(self) -> QuantumState:
        return QuantumState.from_density(self.rho)


def project_density(m: np.ndarray, method: str = "nearest") -> np.ndarray:
    """Map a Hermitian unit-trace estimate to a physical density matrix.

    ``nearest`` is the Frobenius-closest PSD unit-trace matrix (eigenvalues
    projected onto the simplex); ``clip`` zeroes negative eigenvalues and
    renormalizes.
    """
    from .mitigation import project_to_simplex

    h = (m + m.conj().T) / 2
    vals, vecs = np.linalg.eigh(h)
    if method == "nearest":
        vals = project_to_simplex(vals)
    elif method == "clip":
        vals = np.clip(vals, 0, None)
        vals = vals / vals.sum()
    else:
        raise ValueError(f"unknown projection {method!r}")
    return (vecs * vals) @ vecs.conj().T


def _pauli_basis(k: int) -> tuple[list[str], np.ndarray]:
    labels = ["".join(t) for t in itertools.product("IXYZ", repeat=k)]
    mats = np.array([reduce(np.kron, [PAULIS[c] for c in lab]) for lab in labels])
    return labels, mats


def _subset_parity_matrix(k: int) -> np.ndarray:
    """M[mask, b] = (-1)^popcount(mask & b)."""
    idx = np.arange(2**k)
    return np.array([[1 - 2 * (bin(m & b).count("1") & 1) for b in idx] for m in idx], dtype=float)


def state_tomography(prep: Circuit, qubits: Sequence[int], shots_per_setting: int, backend: Backend | None = None,
                     rng_seed=None, rem: RemCalibration | None = None, projection: str = "nearest") -> TomographyResult:
    """Linear-inversion tomography over all 3^k Pauli bases, then physical projection.

    Every Pauli expectation is averaged over all settings compatible with it.
    """
    backend = backend or Backend()
    qubits = list(qubits)
    k = len(qubits)
    if not 1 <= k <= 5:
        raise ValueError("tomography supports 1..5 qubits")
    settings = ["".join(t) for t in itertools.product("XYZ", repeat=k)]
    labels, mats = _pauli_basis(k)
    index = {lab: i for i, lab in enumerate(labels)}
    parity = _subset_parity_matrix(k)
    sums = np.zeros(len(labels))
    hits = np.zeros(len(labels))
    seeds = derive_seeds(rng_seed, len(settings))
    freqs = []
    for s, seed in zip(settings, seeds):
        counts = backend.run(measurement_circuit(prep, s, qubits), shots_per_setting, seed)
        p = apply_rem(counts, rem) if rem is not None else counts.probabilities()
        freqs.append(p)
        ev = parity @ p
        for mask in range(2**k):
            lab = "".join(s[j] if (mask >> (k - 1 - j)) & 1 else "I" for j in range(k))
            sums[index[lab]] += ev[mask]
            hits[index[lab]] += 1
    expect = sums / hits
    rho_lin = np.tensordot(expect, mats, axes=1) / 2**k
    if projection == "mle":
        rho = mle_density(settings, np.array(freqs))
    else:
        rho = project_density(rho_lin, projection)
    return TomographyResult(rho, rho_lin, settings, int(shots_per_setting), qubits)


_ROTATION = {"X": H, "Y": H @ np.diag([1, -1j]), "Z": np.eye(2)}


def mle_density(settings: Sequence[str], freqs: np.ndarray, max_iters: int = 5000, tol: float = 1e-10) -> np.ndarray:
    """Maximum-likelihood density matrix by the R rho R fixed-point iteration.

    Opt-in alternative to linear inversion; it favours low-rank estimates.
    """
    us = np.array([reduce(np.kron, [_ROTATION[c] for c in s]) for s in settings])
    uh = us.conj().transpose(0, 2, 1)
    d = us.shape[1]
    rho = np.eye(d, dtype=complex) / d
    for _ in range(max_iters):
        p = np.real(np.einsum("sij,sij->si", us @ rho, us.conj()))
        r = ((uh * (freqs / np.maximum(p, 1e-15))[:, None, :]) @ us).sum(0) / len(settings)
        new = r @ rho @ r
        new /= np.trace(new).real
        if np.abs(new - rho).max() < tol:
            return (new + new.conj().T) / 2
        rho = new
    log.warning("MLE tomography did not converge in %d iterations", max_iters)
    return (rho + rho.conj().T) / 2


def von_neumann_entropy(rho, atol: float = 1e-9) -> float:
    """-sum lambda log2 lambda, with 0 log 0 = 0."""
    rho = rho.density_matrix() if isinstance(rho, QuantumState) else np.asarray(rho)
    if rho.ndim == 1:
        return 0.0
    if np.abs(rho - rho.conj().T).max() > atol:
        raise ValueError("density matrix is not Hermitian")
    lam = np.linalg.eigvalsh(rho)
    lam = lam[lam > 1e-15]
    return float(max(-(lam * np.log2(lam)).sum(), 0.0))
