"""Noise injection for the simulator and the standalone qutrit relaxation model.

Gate noise is a discrete channel applied after every gate on the qubits it
touched: depolarizing (probability ``p1``/``p2`` by arity, with per-gate
overrides), amplitude damping and phase damping.  Two coherent error knobs
are provided for testing error suppression: a residual ZZ phase on every CZ
and a fractional over-rotation of every R gate.  Readout noise is a
per-qubit 2x2 confusion matrix (tensor-product model).

Profile files are YAML (or JSON) mappings::

    label: good calibration
    depolarizing: {p1: 0.001, p2: 0.01}
    gate_overrides: {"CZ:2-3": 0.15}      # depolarizing prob for one gate
    amplitude_damping: 0.0005
    dephasing: 0.001
    coherent: {cz_phase: 0.0, r_overrotation: 0.0}
    readout:
      default: [[0.98, 0.02], [0.04, 0.96]]  # rows: prepared 0/1; cols: read 0/1
      per_qubit: {0: [[0.97, 0.03], [0.05, 0.95]]}

Qubit indices in profiles are physical indices.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml
from scipy.optimize import least_squares

from .circuit import PAULIS, Gate, r_matrix
from .sim import Counts, QuantumState, apply_kraus_dm, apply_matrix, apply_unitary_dm, as_rng

PROFILE_KEYS = {
    "label", "depolarizing", "gate_overrides", "amplitude_damping", "dephasing", "coherent", "readout",
}


class NoiseError(ValueError):
    pass


def _confusion(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim == 0 and 0 <= m <= 0.5:  # shorthand: symmetric flip probability
        m = symmetric_confusion(float(m))
    if m.shape != (2, 2) or (m < 0).any() or np.abs(m.sum(axis=1) - 1).max() > 1e-12:
        raise NoiseError(f"confusion matrix must be 2x2 row-stochastic, got {m.tolist()}")
    return m


def symmetric_confusion(p_flip: float) -> np.ndarray:
    return np.array([[1 - p_flip, p_flip], [p_flip, 1 - p_flip]])


def _gate_key(kind: str, qubits: Sequence[int]) -> str:
    if kind == "CZ":
        qubits = sorted(qubits)
    return f"{kind}:" + "-".join(str(q) for q in qubits)


@dataclass(frozen=True)
class NoiseProfile:
    label: str = "noise"
    p1: float = 0.0
    p2: float = 0.0
    gate_overrides: Mapping[str, float] = field(default_factory=dict)
    amplitude_damping: float = 0.0
    dephasing: float = 0.0
    cz_phase: float = 0.0
    r_overrotation: float = 0.0
    readout: Mapping[int, np.ndarray] = field(default_factory=dict)
    readout_default: np.ndarray | None = None

    def __post_init__(self):
        probs = [self.p1, self.p2, self.amplitude_damping, self.dephasing, *self.gate_overrides.values()]
        if any(not (0.0 <= float(p) < 1.0) and not (float(p) == 1.0) for p in probs):
            raise NoiseError("noise probabilities must lie in [0, 1]")
        object.__setattr__(self, "readout", {int(q): _confusion(m) for q, m in self.readout.items()})
        if self.readout_default is not None:
            object.__setattr__(self, "readout_default", _confusion(self.readout_default))
        object.__setattr__(self, "gate_overrides", {str(k): float(v) for k, v in self.gate_overrides.items()})

    # -- queries ------------------------------------------------------------
    @property
    def has_channels(self) -> bool:
        """True when any stochastic gate channel is active (needs density matrices)."""
        return bool(self.p1 or self.p2 or self.amplitude_damping or self.dephasing
                    or any(self.gate_overrides.values()))

    @property
    def has_coherent(self) -> bool:
        return bool(self.cz_phase or self.r_overrotation)

    @property
    def has_gate_noise(self) -> bool:
        return self.has_channels or self.has_coherent

    @property
    def has_readout(self) -> bool:
        mats = list(self.readout.values())
        if self.readout_default is not None:
            mats.append(self.readout_default)
        return any(not np.allclose(m, np.eye(2)) for m in mats)

    def depolarizing_for(self, gate: Gate) -> float:
        key = _gate_key(gate.kind, gate.qubits)
        if key in self.gate_overrides:
            return self.gate_overrides[key]
        return self.p1 if len(gate.qubits) == 1 else self.p2

    def confusion(self, qubit: int) -> np.ndarray:
        if qubit in self.readout:
            return self.readout[qubit]
        if self.readout_default is not None:
            return self.readout_default
        if not self.readout:
            return np.eye(2)
        raise NoiseError(f"no readout confusion matrix for qubit {qubit}")

    def actual_unitary(self, gate: Gate) -> np.ndarray:
        """Unitary the noisy device applies for ``gate`` (ideal times coherent error)."""
        if gate.kind == "CZ" and self.cz_phase:
            e = self.cz_phase / 2
            return gate.to_matrix() @ np.diag(np.exp(-1j * e * np.array([1, -1, -1, 1])))
        if gate.kind == "R" and self.r_overrotation:
            theta, phi = gate.params
            return r_matrix(theta * (1 + self.r_overrotation), phi)
        return gate.to_matrix()

    def with_label(self, label: str) -> "NoiseProfile":
        d = self.__dict__.copy()
        d["label"] = label
        return NoiseProfile(**d)

    # -- (de)serialization ------------------------------------------------
    @classmethod
    def from_dict(cls, d: Mapping) -> "NoiseProfile":
        unknown = set(d) - PROFILE_KEYS
        if unknown:
            raise NoiseError(f"unknown noise-profile keys: {sorted(unknown)}")
        dep = d.get("depolarizing", {}) or {}
        coh = d.get("coherent", {}) or {}
        ro = d.get("readout", {}) or {}
        return cls(
            label=str(d.get("label", "noise")),
            p1=float(dep.get("p1", 0.0)),
            p2=float(dep.get("p2", 0.0)),
            gate_overrides=dict(d.get("gate_overrides", {}) or {}),
            amplitude_damping=float(d.get("amplitude_damping", 0.0)),
            dephasing=float(d.get("dephasing", 0.0)),
            cz_phase=float(coh.get("cz_phase", 0.0)),
            r_overrotation=float(coh.get("r_overrotation", 0.0)),
            readout={int(q): m for q, m in (ro.get("per_qubit", {}) or {}).items()},
            readout_default=ro.get("default"),
        )

    def to_dict(self) -> dict:
        ro: dict = {}
        if self.readout_default is not None:
            ro["default"] = self.readout_default.tolist()
        if self.readout:
            ro["per_qubit"] = {q: m.tolist() for q, m in self.readout.items()}
        return {
            "label": self.label,
            "depolarizing": {"p1": self.p1, "p2": self.p2},
            "gate_overrides": dict(self.gate_overrides),
            "amplitude_damping": self.amplitude_damping,
            "dephasing": self.dephasing,
            "coherent": {"cz_phase": self.cz_phase, "r_overrotation": self.r_overrotation},
            "readout": ro,
        }

    @classmethod
    def load(cls, path: str | Path) -> "NoiseProfile":
        text = Path(path).read_text()
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
        return cls.from_dict(data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def readout_only(p_flip: float, label: str | None = None) -> NoiseProfile:
    """Symmetric bit-flip readout noise on every qubit and nothing else."""
    return NoiseProfile(label=label or f"readout {p_flip:g}", readout_default=symmetric_confusion(p_flip))


def bundled_profile(name: str) -> NoiseProfile:
    """Load one of the packaged sample profiles: "good" or "degraded"."""
    fname = {"good": "good_calibration.yaml", "degraded": "degraded_calibration.yaml"}.get(name, name)
    text = resources.files("deskqc").joinpath("profiles").joinpath(fname).read_text()
    return NoiseProfile.from_dict(yaml.safe_load(text))


# ---------------------------------------------------------------------------
# channels
# ---------------------------------------------------------------------------

def _depolarize(rho: np.ndarray, p: float, qubits: Sequence[int], n: int) -> np.ndarray:
    if p == 0:
        return rho
    k = len(qubits)
    acc = np.zeros_like(rho)
    labels = ["".join(s) for s in np.array(np.meshgrid(*[list("IXYZ")] * k, indexing="ij")).reshape(k, -1).T]
    for lab in labels:
        mat = PAULIS[lab[0]]
        for c in lab[1:]:
            mat = np.kron(mat, PAULIS[c])
        acc += apply_unitary_dm(rho, mat, qubits, n)
    return (1 - p) * rho + p * acc / 4**k


def amplitude_damping_kraus(gamma: float) -> list[np.ndarray]:
    return [np.array([[1, 0], [0, math.sqrt(1 - gamma)]]), np.array([[0, math.sqrt(gamma)], [0, 0]])]


def phase_damping_kraus(lam: float) -> list[np.ndarray]:
    return [np.array([[1, 0], [0, math.sqrt(1 - lam)]]), np.array([[0, 0], [0, math.sqrt(lam)]])]


def apply_gate_noise(state: QuantumState, gate: Gate, profile: NoiseProfile) -> QuantumState:
    """Apply the (possibly miscalibrated) gate, then the profile's channels on its qubits."""
    n = state.num_qubits
    if not state.is_density:
        if profile.has_channels:
            raise NoiseError("stochastic noise channels need a density-matrix state")
        from .sim import apply_unitary_sv
        return QuantumState(apply_unitary_sv(state.data, profile.actual_unitary(gate), gate.qubits, n), n)
    rho = apply_unitary_dm(state.data, profile.actual_unitary(gate), gate.qubits, n)
    rho = _depolarize(rho, profile.depolarizing_for(gate), gate.qubits, n)
    if profile.amplitude_damping:
        kr = amplitude_damping_kraus(profile.amplitude_damping)
        for q in gate.qubits:
            rho = apply_kraus_dm(rho, kr, [q], n)
    if profile.dephasing:
        kr = phase_damping_kraus(profile.dephasing)
        for q in gate.qubits:
            rho = apply_kraus_dm(rho, kr, [q], n)
    return QuantumState(rho, n)


def confuse_probabilities(p: np.ndarray, matrices: Sequence[np.ndarray]) -> np.ndarray:
    """Push an ideal outcome distribution through per-bit confusion matrices."""
    k = len(matrices)
    t = np.asarray(p, dtype=float).reshape((2,) * k)
    for axis, m in enumerate(matrices):
        # new[j] = sum_i old[i] * m[i, j]
        t = apply_matrix(t, np.asarray(m).T, [axis])
    return np.clip(t.reshape(-1), 0, None)


def apply_readout_confusion(ideal, profile: NoiseProfile, rng_seed=None,
                            qubits: Sequence[int] | None = None, shots: int | None = None) -> Counts:
    """Flip measured bits per the profile's confusion matrices.

    ``ideal`` is either Counts (each shot is corrupted independently) or a
    probability vector (then ``shots`` draws are taken from the corrupted
    distribution).  ``qubits`` names the physical qubit behind each bit.
    """
    rng = as_rng(rng_seed)
    if isinstance(ideal, Counts):
        k = ideal.num_bits
        qubits = list(range(k)) if qubits is None else list(qubits)
        mats = [profile.confusion(q) for q in qubits]
        total = np.zeros(2**k, dtype=np.int64)
        for bits, c in sorted(ideal.items()):
            onehot = np.zeros(2**k)
            onehot[int(bits, 2)] = 1.0
            q = confuse_probabilities(onehot, mats)
            total += rng.multinomial(c, q / q.sum())
        return Counts.from_array(total, k)
    p = np.asarray(ideal, dtype=float)
    k = int(round(np.log2(p.size)))
    if shots is None:
        raise NoiseError("shots is required when corrupting a probability vector")
    qubits = list(range(k)) if qubits is None else list(qubits)
    q = confuse_probabilities(p / p.sum(), [profile.confusion(i) for i in qubits])
    return Counts.from_array(rng.multinomial(int(shots), q / q.sum()), k)


# ---------------------------------------------------------------------------
# qutrit relaxation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QutritRates:
    """Decay rates in 1/us for |1>->|0>, |2>->|1> and |2>->|0>."""

    g10: float
    g21: float
    g20: float

    def __post_init__(self):
        if min(self.g10, self.g21, self.g20) <= 0 or not all(map(math.isfinite, self.as_array())):
            raise NoiseError("qutrit rates must be positive and finite")

    @classmethod
    def from_lifetimes(cls, t10: float, t21: float, t20: float) -> "QutritRates":
        return cls(1 / t10, 1 / t21, 1 / t20)

    @property
    def lifetimes(self) -> tuple[float, float, float]:
        return 1 / self.g10, 1 / self.g21, 1 / self.g20

    def as_array(self) -> np.ndarray:
        return np.array([self.g10, self.g21, self.g20])


@dataclass
class QutritTrace:
    delays: np.ndarray
    populations: np.ndarray  # shape (len(delays), 3): P0, P1, P2

    def __post_init__(self):
        self.delays = np.asarray(self.delays, dtype=float)
        self.populations = np.asarray(self.populations, dtype=float)
        if self.populations.shape != (self.delays.size, 3):
            raise NoiseError("populations must have one (P0, P1, P2) row per delay")


@dataclass
class QutritFit:
    rates: QutritRates
    rate_stderr: np.ndarray
    lifetime_stderr: np.ndarray
    residual_rms: float
    nfev: int

    @property
    def lifetimes(self):
        return self.rates.lifetimes


class QutritFitError(RuntimeError):
    pass


def _exp_diff(a, b: float, t: np.ndarray) -> np.ndarray:
    """(exp(-a t) - exp(-b t)) / (b - a), continuous through a == b.

    Written as exp(-min t) (1 - exp(-d t)) / d with d = |b - a|, which never overflows.
    """
    m, d = np.minimum(a, b), np.abs(b - a)
    x = d * t
    small = x < 1e-8
    ratio = np.where(small, t * (1 - x / 2), -np.expm1(-x) / np.where(d > 0, d, 1.0))
    return np.exp(-m * t) * ratio


def qutrit_populations(t, rates: QutritRates) -> np.ndarray:
    """Closed-form (P0, P1, P2) at delay(s) ``t`` for a qutrit prepared in |2>.

    dP2/dt = -(g21+g20) P2,  dP1/dt = g21 P2 - g10 P1,  P0 = 1 - P1 - P2.
    """
    t = np.asarray(t, dtype=float)
    if (t < 0).any():
        raise NoiseError("delays must be non-negative")
    k = rates.g21 + rates.g20
    p2 = np.exp(-k * t)
    p1 = rates.g21 * _exp_diff(k, rates.g10, t)
    p0 = 1.0 - p1 - p2
    return np.stack([p0, p1, p2], axis=-1)


def _initial_guess(trace: QutritTrace) -> np.ndarray:
    t, pop = trace.delays, trace.populations
    mask = (pop[:, 2] > 0.05) & (t > 0)
    k = 0.05
    if mask.sum() >= 2:
        slope = np.polyfit(t[mask], np.log(pop[mask, 2]), 1)[0]
        k = max(-slope, 1e-4)
    # early-time slope of P1 approximates g21
    early = np.argsort(t)[1:4]
    g21 = np.median(pop[early, 1] / np.maximum(t[early], 1e-12)) if t.max() > 0 else k / 2
    g21 = float(np.clip(g21, 0.1 * k, 0.9 * k))
    tail = t > np.percentile(t, 50)
    g10 = k / 2
    m1 = tail & (pop[:, 1] > 0.02)
    if m1.sum() >= 2:
        g10 = max(-np.polyfit(t[m1], np.log(pop[m1, 1]), 1)[0], 1e-4)
    return np.log([g10, g21, k - g21])


def fit_qutrit_rates(trace: QutritTrace, max_nfev: int = 2000) -> QutritFit:
    """Levenberg-Marquardt fit of (g10, g21, g20) to all three population curves.

    Rates are fitted in log space so they stay positive.  Raises
    QutritFitError with a residual report when the data do not pin down the
    rates (e.g. no decay within the delay window) or the solver stalls.
    """
    if np.unique(trace.delays).size < 6:
        raise NoiseError("need at least 6 distinct delays")
    t, data = trace.delays, trace.populations

    def resid(x):
        return (qutrit_populations(t, QutritRates(*np.exp(x))) - data).ravel()

    x0 = _initial_guess(trace)
    # the heuristic start can sit in the wrong basin on coarse delay grids,
    # so also try a few scaled variants and keep the lowest cost
    k = float(np.exp(x0[1]) + np.exp(x0[2]))
    starts = [x0] + [np.log([a * k, b * k, k / 2]) for a in (0.3, 1.0, 3.0) for b in (0.25, 0.5)]
    sol, last_exc = None, None
    for start in starts:
        try:
            cand = least_squares(resid, start, method="lm", max_nfev=max_nfev, xtol=1e-12, ftol=1e-12)
        except (NoiseError, FloatingPointError) as exc:
            last_exc = exc
            continue
        if cand.status > 0 and (sol is None or cand.cost < sol.cost - 1e-15):
            sol = cand
        if sol is not None and sol.cost < 1e-20:
            break
    if sol is None:
        raise QutritFitError(f"qutrit fit did not converge from any start: {last_exc or 'solver stalled'}")
    rms = float(np.sqrt(np.mean(sol.fun**2)))
    rates = np.exp(sol.x)
    report = f"status={sol.status}, nfev={sol.nfev}, rms residual={rms:.3g}, rates={rates}"
    if sol.status <= 0 or not np.all(np.isfinite(rates)):
        raise QutritFitError("qutrit fit did not converge: " + report)
    # a lifetime far outside the observation window means the rate was not identified
    if (1 / rates).max() > 100 * max(t.max(), 1e-9):
        raise QutritFitError("qutrit fit did not converge to identifiable rates: " + report)
    J = sol.jac
    dof = max(resid(sol.x).size - 3, 1)
    s2 = float(sol.fun @ sol.fun) / dof
    jtj = J.T @ J
    if np.linalg.cond(jtj) > 1e14:
        raise QutritFitError("qutrit fit is degenerate (singular Jacobian): " + report)
    cov_log = np.linalg.inv(jtj) * s2
    se_log = np.sqrt(np.clip(np.diag(cov_log), 0, None))
    return QutritFit(
        rates=QutritRates(*rates),
        rate_stderr=rates * se_log,
        lifetime_stderr=se_log / rates,
        residual_rms=rms,
        nfev=int(sol.nfev),
    )


def synthetic_qutrit_trace(rates: QutritRates, delays, noise_sigma: float = 0.0, rng_seed=None) -> QutritTrace:
    """Populations from the closed-form model, optionally with additive Gaussian noise."""
    delays = np.asarray(delays, dtype=float)
    pop = qutrit_populations(delays, rates)
    if noise_sigma:
        pop = pop + as_rng(rng_seed).normal(0.0, noise_sigma, pop.shape)
    return QutritTrace(delays, pop)


REFERENCE_QUTRIT_LIFETIMES = (44.4, 35.0, 69.2)  # us: 1/g10, 1/g21, 1/g20
