"""Dense statevector / density-matrix simulation and shot sampling.

States are stored as flat arrays in the big-endian convention (qubit 0 is the
most significant bit).  Gate application reshapes to a rank-n tensor and
contracts only the touched axes, so cost is O(2^n) per gate for statevectors
and O(4^n) for density matrices.

Randomness: every sampling routine takes a seed or a ``numpy.random.Generator``.
Integer seeds are expanded with ``numpy.random.SeedSequence`` into a PCG64
stream; ``derive_seeds`` spawns independent child streams for parallel tasks.
Streams are reproducible bit-for-bit within this implementation only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .circuit import Circuit, CircuitError, Gate

NORM_ATOL = 1e-9


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------

def as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.PCG64(seed))


def derive_seeds(seed, n: int) -> list[np.random.SeedSequence]:
    """Independent child seed sequences for ``n`` tasks."""
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n)


# ---------------------------------------------------------------------------
# data types
# ---------------------------------------------------------------------------

@dataclass
class QuantumState:
    """Statevector (shape (2^n,)) or density matrix (shape (2^n, 2^n))."""

    data: np.ndarray
    num_qubits: int

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        dim = 2**self.num_qubits
        if self.data.shape not in ((dim,), (dim, dim)):
            raise ValueError(f"state of shape {self.data.shape} does not match {self.num_qubits} qubits")

    @property
    def is_density(self) -> bool:
        return self.data.ndim == 2

    @classmethod
    def zero(cls, n: int, density: bool = False) -> "QuantumState":
        v = np.zeros(2**n, dtype=complex)
        v[0] = 1
        return cls(np.outer(v, v) if density else v, n)

    @classmethod
    def from_vector(cls, v) -> "QuantumState":
        v = np.asarray(v, dtype=complex)
        if abs(np.linalg.norm(v) - 1) > 1e-8:
            raise ValueError("statevector must have unit norm")
        return cls(v, int(round(np.log2(v.size))))

    @classmethod
    def from_density(cls, rho) -> "QuantumState":
        rho = np.asarray(rho, dtype=complex)
        if (np.abs(rho - rho.conj().T).max() > 1e-8 or abs(np.trace(rho) - 1) > 1e-8
                or np.linalg.eigvalsh((rho + rho.conj().T) / 2)[0] < -1e-8):
            raise ValueError("density matrix must be Hermitian, unit trace and positive semidefinite")
        return cls(rho, int(round(np.log2(rho.shape[0]))))

    def density_matrix(self) -> np.ndarray:
        return self.data if self.is_density else np.outer(self.data, self.data.conj())

    def to_density(self) -> "QuantumState":
        return QuantumState(self.density_matrix(), self.num_qubits)

    def probabilities(self, qubits: Sequence[int] | None = None) -> np.ndarray:
        """Born-rule probabilities of computational outcomes on ``qubits`` (in that order)."""
        p = np.real(np.diag(self.data)) if self.is_density else np.abs(self.data) ** 2
        p = np.clip(p, 0, None)
        if qubits is None or list(qubits) == list(range(self.num_qubits)):
            return p / p.sum()
        return marginal(p, self.num_qubits, qubits)

    def check(self, atol: float = NORM_ATOL) -> None:
        if self.is_density:
            rho = self.data
            if np.abs(rho - rho.conj().T).max() > atol:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(rho) - 1) > atol:
                raise ValueError("density matrix trace differs from 1")
            if np.linalg.eigvalsh(rho).min() < -atol:
                raise ValueError("density matrix has a negative eigenvalue")
        elif abs(np.linalg.norm(self.data) - 1) > atol:
            raise ValueError("statevector is not normalized")


def marginal(p: np.ndarray, n: int, qubits: Sequence[int]) -> np.ndarray:
    t = p.reshape((2,) * n)
    rest = tuple(q for q in range(n) if q not in qubits)
    t = t.sum(axis=rest) if rest else t
    # remaining axes are sorted ascending; reorder to requested order
    kept = sorted(qubits)
    t = np.transpose(t, [kept.index(q) for q in qubits])
    out = t.reshape(-1)
    return out / out.sum()


class Counts(dict):
    """Bitstring -> count.  Bitstrings list measured qubits left to right."""

    def __init__(self, table: Mapping[str, int] | None = None, num_bits: int | None = None):
        super().__init__()
        for k, v in (table or {}).items():
            if int(v) < 0:
                raise ValueError("negative count")
            if int(v):
                self[str(k)] = int(v)
        lengths = {len(k) for k in self}
        if len(lengths) > 1:
            raise ValueError("bitstrings of unequal length")
        if num_bits is None:
            num_bits = lengths.pop() if lengths else 0
        elif lengths and lengths.pop() != num_bits:
            raise ValueError("bitstring length does not match num_bits")
        self.num_bits = int(num_bits)

    @property
    def shots(self) -> int:
        return sum(self.values())

    @property
    def table(self) -> dict[str, int]:
        return dict(self)

    def to_array(self) -> np.ndarray:
        a = np.zeros(2**self.num_bits, dtype=np.int64)
        for k, v in self.items():
            a[int(k, 2)] = v
        return a

    def probabilities(self) -> np.ndarray:
        a = self.to_array().astype(float)
        return a / a.sum()

    def frequency(self, bitstring: str) -> float:
        return self.get(bitstring, 0) / self.shots

    @classmethod
    def from_array(cls, counts: np.ndarray, num_bits: int) -> "Counts":
        counts = np.asarray(counts)
        nz = np.nonzero(counts)[0]
        return cls({format(int(i), f"0{num_bits}b"): int(counts[i]) for i in nz}, num_bits)

    def marginal(self, positions: Sequence[int]) -> "Counts":
        out: dict[str, int] = {}
        for k, v in self.items():
            kk = "".join(k[i] for i in positions)
            out[kk] = out.get(kk, 0) + v
        return Counts(out, len(positions))


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------

def apply_matrix(tensor: np.ndarray, mat: np.ndarray, axes: Sequence[int]) -> np.ndarray:
    """Contract a (2^k x 2^k) matrix into ``axes`` of a rank-n (2,...,2) tensor."""
    k = len(axes)
    m = np.asarray(mat).reshape((2,) * (2 * k))
    out = np.tensordot(m, tensor, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def apply_unitary_sv(psi: np.ndarray, mat: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    return apply_matrix(psi.reshape((2,) * n), mat, qubits).reshape(-1)


def apply_unitary_dm(rho: np.ndarray, mat: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    t = rho.reshape((2,) * (2 * n))
    t = apply_matrix(t, mat, qubits)
    t = apply_matrix(t, np.conj(mat), [n + q for q in qubits])
    return t.reshape(2**n, 2**n)


def apply_kraus_dm(rho: np.ndarray, kraus: Sequence[np.ndarray], qubits: Sequence[int], n: int) -> np.ndarray:
    out = np.zeros_like(rho)
    for k in kraus:
        out += apply_unitary_dm(rho, k, qubits, n)
    return out


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def run_statevector(circuit: Circuit, initial: QuantumState | None = None) -> QuantumState:
    """Exact final statevector from |0...0> (or ``initial``)."""
    n = circuit.num_qubits
    if any(g.kind == "Measure" for g in circuit.gates):
        raise CircuitError("run_statevector does not accept Measure gates; use sample_counts on the result")
    psi = QuantumState.zero(n).data if initial is None else initial.data.copy()
    for g in circuit.gates:
        if g.kind == "Barrier":
            continue
        psi = apply_unitary_sv(psi, g.to_matrix(), g.qubits, n)
    return QuantumState(psi, n)


def run_density(circuit: Circuit, noise=None, initial: QuantumState | None = None) -> QuantumState:
    """Density-matrix evolution, applying ``noise`` (a NoiseProfile) after each gate.

    Measure gates are skipped here; readout errors are applied at sampling.
    """
    from .noise import apply_gate_noise

    n = circuit.num_qubits
    state = QuantumState.zero(n, density=True) if initial is None else initial.to_density()
    for g in circuit.gates:
        if not g.is_unitary_op:
            continue
        if noise is None:
            state = QuantumState(apply_unitary_dm(state.data, g.to_matrix(), g.qubits, n), n)
        else:
            state = apply_gate_noise(state, g, noise)
    return state


def sample_counts(state: QuantumState, shots: int, rng_seed=None, qubits: Sequence[int] | None = None) -> Counts:
    """Multinomial draw of ``shots`` outcomes from the Born-rule distribution."""
    if int(shots) < 1:
        raise ValueError("shots must be >= 1")
    qubits = list(range(state.num_qubits)) if qubits is None else list(qubits)
    p = state.probabilities(qubits)
    return sample_from_probabilities(p, shots, rng_seed)


def sample_from_probabilities(p: np.ndarray, shots: int, rng_seed=None) -> Counts:
    p = np.clip(np.asarray(p, dtype=float), 0, None)
    p = p / p.sum()
    nbits = int(round(np.log2(p.size)))
    draws = as_rng(rng_seed).multinomial(int(shots), p)
    return Counts.from_array(draws, nbits)


def partial_trace(state: QuantumState, keep: Sequence[int]) -> QuantumState:
    """Reduced density matrix on ``keep`` (strictly increasing qubit indices)."""
    keep = list(keep)
    n = state.num_qubits
    if not keep:
        raise ValueError("keep must list at least one qubit")
    if any(b <= a for a, b in zip(keep, keep[1:])) or keep[0] < 0 or keep[-1] >= n:
        raise ValueError("keep must be strictly increasing valid qubit indices")
    traced = [q for q in range(n) if q not in keep]
    k = len(keep)
    if state.is_density:
        t = state.data.reshape((2,) * (2 * n))
        # bring kept row axes, kept col axes, then traced row/col pairs
        t = t.transpose(keep + [n + q for q in keep] + traced + [n + q for q in traced])
        m = 2 ** (n - k)
        t = t.reshape(2**k, 2**k, m, m)
        rho = np.einsum("abcc->ab", t)
    else:
        t = state.data.reshape((2,) * n).transpose(keep + traced).reshape(2**k, -1)
        rho = t @ t.conj().T
    return QuantumState(rho, k)


def _sqrtm_psd(rho: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    return (v * np.sqrt(np.clip(w, 0, None))) @ v.conj().T


def state_fidelity(a: QuantumState, b: QuantumState) -> float:
    """Uhlmann fidelity (tr sqrt(sqrt(rho) sigma sqrt(rho)))^2; |<a|b>|^2 for pure states."""
    if a.num_qubits != b.num_qubits:
        raise ValueError("states have different qubit counts")
    if not a.is_density and not b.is_density:
        f = abs(np.vdot(a.data, b.data)) ** 2
    elif not a.is_density:
        f = np.real(a.data.conj() @ b.data @ a.data)
    elif not b.is_density:
        f = np.real(b.data.conj() @ a.data @ b.data)
    else:
        sa = _sqrtm_psd(a.data)
        ev = np.linalg.eigvalsh(sa @ b.data @ sa)
        f = np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2
    return float(np.clip(f, 0.0, 1.0))


def permute_qubits(state: QuantumState, perm: Sequence[int]) -> QuantumState:
    """Return the state whose qubit ``perm[i]`` holds what qubit ``i`` held."""
    n = state.num_qubits
    inv = np.argsort(perm)
    if state.is_density:
        t = state.data.reshape((2,) * (2 * n)).transpose(list(inv) + [n + i for i in inv])
        return QuantumState(t.reshape(2**n, 2**n), n)
    return QuantumState(state.data.reshape((2,) * n).transpose(inv).reshape(-1), n)


def unitary_distance(u: np.ndarray, v: np.ndarray) -> float:
    """Operator-norm distance between u and v after removing the best global phase."""
    tr = np.trace(v.conj().T @ u)
    phase = tr / abs(tr) if abs(tr) > 1e-12 else 1.0
    return float(np.linalg.norm(u - phase * v, 2))


def nearest_unitary(m: np.ndarray) -> np.ndarray:
    """Polar factor: the unitary closest to ``m`` in Frobenius norm."""
    u, _ = scipy.linalg.polar(np.asarray(m, dtype=complex))
    return u


def gate_unitary_list(gates: Sequence[Gate], n: int) -> np.ndarray:
    return Circuit(n, [g for g in gates if g.is_unitary_op]).to_unitary()
