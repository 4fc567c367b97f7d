"""Readout error mitigation, randomized compiling, zero-noise extrapolation, bootstrap."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import reduce
from typing import Callable, Mapping, Sequence

import numpy as np

from .backend import Backend, basis_state_circuit
from .circuit import CZ, PAULIS, Circuit, Gate
from .sim import Counts, as_rng
from .transpiler import NativeCircuit, absorb_virtual_z, _norm_angle

COND_LIMIT = 1e8


class RemConditioningError(np.linalg.LinAlgError):
    pass


# ---------------------------------------------------------------------------
# readout error mitigation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RemCalibration:
    """Assignment matrix A with A[measured, prepared] (columns sum to one).

    ``mode == "local"`` stores one 2x2 matrix per bit and builds A as their
    Kronecker product (bit 0 is the most significant).
    """

    mode: str
    matrix: np.ndarray | None = None
    local: tuple = ()
    shots_per_state: int = 0
    qubits: tuple = ()

    def __post_init__(self):
        if self.mode not in ("correlated", "local"):
            raise ValueError(f"unknown REM mode {self.mode!r}")
        mats = [self.full_matrix()]
        for m in mats:
            if (m < -1e-12).any() or np.abs(m.sum(axis=0) - 1).max() > 1e-9:
                raise ValueError("assignment matrix must be column-stochastic")

    @property
    def num_bits(self) -> int:
        return len(self.local) if self.mode == "local" else int(round(math.log2(self.matrix.shape[0])))

    def full_matrix(self) -> np.ndarray:
        if self.mode == "correlated":
            return np.asarray(self.matrix, dtype=float)
        return reduce(np.kron, [np.asarray(m, dtype=float) for m in self.local])

    @property
    def condition_number(self) -> float:
        return float(np.linalg.cond(self.full_matrix()))

    @classmethod
    def identity(cls, num_bits: int, mode: str = "correlated") -> "RemCalibration":
        if mode == "local":
            return cls("local", local=tuple(np.eye(2) for _ in range(num_bits)))
        return cls("correlated", matrix=np.eye(2**num_bits))

    @classmethod
    def from_confusions(cls, confusions: Sequence[np.ndarray], mode: str = "local") -> "RemCalibration":
        """Exact calibration from row-stochastic confusion matrices (rows: prepared)."""
        local = tuple(np.asarray(c, dtype=float).T for c in confusions)
        if mode == "local":
            return cls("local", local=local)
        return cls("correlated", matrix=reduce(np.kron, local))

    def to_dict(self) -> dict:
        d = {"mode": self.mode, "shots_per_state": self.shots_per_state, "qubits": list(self.qubits)}
        if self.mode == "local":
            d["local"] = [m.tolist() for m in self.local]
        else:
            d["matrix"] = self.matrix.tolist()
        return d


def calibrate_rem(num_qubits: int, mode: str = "correlated", shots_per_state: int = 10_000,
                  backend: Backend | None = None, rng_seed=None,
                  qubits: Sequence[int] | None = None) -> RemCalibration:
    """Run basis-state preparation circuits and record outcome distributions.

    ``qubits`` are the physical qubits to characterize (default 0..n-1).
    Correlated mode prepares all 2^n basis states; local mode prepares
    |0...0> and |1...1> and keeps each bit's 2x2 marginal.
    """
    if int(shots_per_state) < 1:
        raise ValueError("shots_per_state must be >= 1")
    backend = backend or Backend()
    qubits = list(range(num_qubits)) if qubits is None else list(qubits)
    if len(qubits) != num_qubits:
        raise ValueError("qubits must list one physical qubit per bit")
    width = backend.topology.num_qubits if backend.transpile else max(qubits) + 1
    identity = list(range(width))
    rng = as_rng(rng_seed)
    if mode == "correlated":
        dim = 2**num_qubits
        a = np.zeros((dim, dim))
        for b in range(dim):
            bits = format(b, f"0{num_qubits}b")
            counts = backend.run(basis_state_circuit(bits, width, qubits), shots_per_state, rng, identity)
            a[:, b] = counts.to_array() / counts.shots
        return RemCalibration("correlated", matrix=a, shots_per_state=int(shots_per_state), qubits=tuple(qubits))
    if mode != "local":
        raise ValueError(f"unknown REM mode {mode!r}")
    runs = {}
    for bit in "01":
        runs[bit] = backend.run(basis_state_circuit(bit * num_qubits, width, qubits), shots_per_state, rng, identity)
    local = []
    for i in range(num_qubits):
        m = np.zeros((2, 2))
        for prep in (0, 1):
            marg = runs[str(prep)].marginal([i])
            m[:, prep] = marg.to_array() / marg.shots
        local.append(m)
    return RemCalibration("local", local=tuple(local), shots_per_state=int(shots_per_state), qubits=tuple(qubits))


def project_to_simplex(v) -> np.ndarray:
    """Euclidean projection onto {p : p >= 0, sum p = 1} (sort-based)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def _check_conditioning(a: np.ndarray) -> None:
    cond = np.linalg.cond(a)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise RemConditioningError(f"assignment matrix is ill-conditioned (cond = {cond:.3g})")


def apply_rem(raw, cal: RemCalibration) -> np.ndarray:
    """Mitigated probability vector: least-squares solve of A p = f, projected onto the simplex."""
    f = raw.probabilities() if isinstance(raw, Counts) else np.asarray(raw, dtype=float)
    a = cal.full_matrix()
    if a.shape[0] != f.size:
        raise ValueError(f"calibration is for {cal.num_bits} bits, data has {int(math.log2(f.size))}")
    _check_conditioning(a)
    p = np.linalg.lstsq(a, f, rcond=None)[0]
    return project_to_simplex(p)


def rem_linear_stderr(raw: Counts, cal: RemCalibration, weights: np.ndarray) -> float:
    """Shot-noise stderr of sum_b w_b p_b where p = A^-1 f (multinomial f)."""
    a = cal.full_matrix()
    w = np.linalg.solve(a.T, np.asarray(weights, dtype=float))
    f = raw.probabilities()
    var = f @ w**2 - (f @ w) ** 2
    return float(math.sqrt(max(var, 0.0) / raw.shots))


@dataclass
class MitigatedValue:
    value: float
    stderr: float
    methods: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        self.value = float(self.value)
        self.stderr = float(self.stderr)
        self.methods = frozenset(self.methods)
        if not math.isfinite(self.stderr) or self.stderr < 0:
            raise ValueError("stderr must be finite and non-negative")

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "methods": sorted(self.methods)}


# ---------------------------------------------------------------------------
# randomized compiling
# ---------------------------------------------------------------------------

_PAULI_LETTERS = "IXYZ"


def _cz_conjugate(pa: str, pb: str) -> tuple[str, str]:
    """Letters (qa, qb) with CZ (pa x pb) CZ = qa x qb up to phase."""
    m = CZ @ np.kron(PAULIS[pa], PAULIS[pb]) @ CZ
    for qa, qb in itertools.product(_PAULI_LETTERS, repeat=2):
        ov = np.trace(np.kron(PAULIS[qa], PAULIS[qb]).conj().T @ m) / 4
        if abs(abs(ov) - 1) < 1e-12:
            return qa, qb
    raise AssertionError("CZ maps Paulis to Paulis")


CZ_CONJUGATION = {(a, b): _cz_conjugate(a, b) for a, b in itertools.product(_PAULI_LETTERS, repeat=2)}


def _pauli_gate(letter: str, q: int) -> list[Gate]:
    return [] if letter == "I" else [Gate(letter, (q,))]


def _combine_frames(a: Mapping[int, float], b: Mapping[int, float]) -> dict[int, float]:
    out = dict(a)
    for q, lam in b.items():
        out[q] = _norm_angle(out.get(q, 0.0) + lam)
    return {q: lam for q, lam in out.items() if lam}


def pauli_twirl_cz(native: NativeCircuit, num_randomizations: int, rng_seed=None) -> list[NativeCircuit]:
    """Wrap each CZ in a random Pauli pair and its compensation, then re-merge single-qubit runs."""
    rng = as_rng(rng_seed)
    variants = []
    for _ in range(int(num_randomizations)):
        gates: list[Gate] = []
        for g in native.circuit.gates:
            if g.kind != "CZ":
                gates.append(g)
                continue
            pa, pb = (_PAULI_LETTERS[i] for i in rng.integers(0, 4, size=2))
            qa, qb = CZ_CONJUGATION[(pa, pb)]
            a, b = g.qubits
            gates += _pauli_gate(pa, a) + _pauli_gate(pb, b) + [g] + _pauli_gate(qa, a) + _pauli_gate(qb, b)
        circ, frames = absorb_virtual_z(Circuit(native.circuit.num_qubits, gates, dict(native.circuit.metadata)))
        variants.append(NativeCircuit(circ, list(native.initial_layout), list(native.final_layout),
                                      _combine_frames(native.frames, frames), native.swaps, native.num_logical))
    return variants


# ---------------------------------------------------------------------------
# zero-noise extrapolation
# ---------------------------------------------------------------------------

def fold_global(native: NativeCircuit, scale: int) -> NativeCircuit:
    """C (C^dag C)^((scale-1)/2); the folded gates are left unmerged on purpose."""
    scale = int(scale)
    if scale < 1 or scale % 2 == 0:
        raise ValueError("fold scale must be an odd integer >= 1")
    body = [g for g in native.circuit.gates if g.is_unitary_op]
    meas = [g for g in native.circuit.gates if g.kind == "Measure"]
    inv = [g.inverse() for g in reversed(body)]
    gates = body + (inv + body) * ((scale - 1) // 2) + meas
    circ = Circuit(native.circuit.num_qubits, gates, dict(native.circuit.metadata))
    circ.metadata["fold_scale"] = scale
    return NativeCircuit(circ, list(native.initial_layout), list(native.final_layout),
                         dict(native.frames), native.swaps, native.num_logical)


def zne_extrapolate(points: Sequence[tuple[float, float, float]]) -> MitigatedValue:
    """Weighted polynomial fit in the noise scale, evaluated at scale 0.

    Degree is min(#points - 1, 2).  Weights are 1/stderr^2 when every stderr
    is positive; the reported stderr comes from the fit covariance.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two (scale, value, stderr) points")
    s, v, e = pts[:, 0], pts[:, 1], pts[:, 2]
    if np.unique(s).size < 2:
        raise ValueError("need at least two distinct scales")
    deg = min(np.unique(s).size - 1, 2)
    X = np.vander(s, deg + 1, increasing=True)
    w = 1 / e**2 if np.all(e > 0) else np.ones_like(s)
    xtwx = X.T @ (w[:, None] * X)
    coef = np.linalg.solve(xtwx, X.T @ (w * v))
    if np.all(e > 0):
        cov = np.linalg.inv(xtwx)
        err = math.sqrt(max(cov[0, 0], 0.0))
    else:
        err = 0.0
    return MitigatedValue(coef[0], err, {"ZNE"})


# ---------------------------------------------------------------------------
# bootstrap
# ---------------------------------------------------------------------------

def bootstrap_stderr(counts: Counts, statistic: Callable[[Counts], float] | Mapping[str, float],
                     resamples: int = 1000, rng_seed=None) -> float:
    """Std. dev. of ``statistic`` over multinomial resamples of ``counts``.

    ``statistic`` may be a callable on Counts or a mapping bitstring -> weight,
    meaning the linear statistic sum_b w_b freq(b) (evaluated vectorized).
    """
    if counts.shots == 0:
        raise ValueError("cannot bootstrap zero-shot counts")
    if resamples < 100:
        raise ValueError("resamples must be >= 100")
    rng = as_rng(rng_seed)
    keys = sorted(counts)
    freq = np.array([counts[k] for k in keys], dtype=float) / counts.shots
    draws = rng.multinomial(counts.shots, freq, size=resamples)
    if isinstance(statistic, Mapping):
        w = np.array([statistic.get(k, 0.0) for k in keys])
        vals = draws @ w / counts.shots
    else:
        nb = counts.num_bits
        vals = np.array([statistic(Counts({k: int(c) for k, c in zip(keys, row) if c}, num_bits=nb))
                         for row in draws])
    return float(np.std(vals, ddof=1))


def average_with_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error of the mean (used for RC variant averages)."""
    v = np.asarray(values, dtype=float)
    if v.size == 1:
        return float(v[0]), 0.0
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))
