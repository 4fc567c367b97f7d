"""VQE for the single-bath Anderson impurity model on four qubits.

Qubit order: 0 = impurity up, 1 = bath up, 2 = impurity down, 3 = bath down.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .backend import Backend
from .circuit import Circuit
from .mitigation import MitigatedValue, RemCalibration, calibrate_rem
from .observables import Observable, estimate_observable
from .sim import as_rng, derive_seeds, run_statevector

log = logging.getLogger(__name__)

NUM_PARAMS = 7
ENTANGLERS = ((0, 1), (0, 2), (0, 3))
DEFAULT_SHOTS = 5000


@dataclass(frozen=True)
class AimParams:
    eps_d: float = 0.0
    eps_1: float = 0.0
    mu: float = 0.0
    U: float = 2.0
    V1: float = 1.0

    def __post_init__(self):
        for k in ("eps_d", "eps_1", "mu", "U", "V1"):
            if not math.isfinite(getattr(self, k)):
                raise ValueError(f"{k} must be finite")

    @classmethod
    def reference_setting(cls, mu: float = 0.0) -> "AimParams":
        return cls(eps_d=mu, eps_1=0.0, mu=mu, U=2.0, V1=1.0)


def _hopping_terms(v: float) -> list:
    h = 0.5 * v
    return [(h, "XXII"), (h, "YYII"), (h, "IIXX"), (h, "IIYY")]


def build_aim_qubit_hamiltonian(p: AimParams, convention: str = "reference") -> Observable:
    """Qubit Hamiltonian of the impurity model.

    ``reference``: the coefficient set used throughout (constant eps_d+eps_1-2mu, impurity
    Z weight -(eps_d-mu+2U)/2, Z0Z2 weight U/4).
    ``fermionic``: the Jordan-Wigner image of
    (eps_d-mu)(n_0+n_2) + eps_1(n_1+n_3) + U n_0 n_2 + V sum_s (d_s^+ c_s + h.c.).
    The two differ in the constant and in the impurity Z weight.
    """
    if convention == "reference":
        const = p.eps_d + p.eps_1 - 2 * p.mu
        zd = -0.5 * (p.eps_d - p.mu + 2 * p.U)
    elif convention == "fermionic":
        const = (p.eps_d - p.mu) + p.eps_1 + 0.25 * p.U
        zd = -0.5 * (p.eps_d - p.mu) - 0.25 * p.U
    else:
        raise ValueError(f"unknown convention {convention!r}")
    zb = -0.5 * p.eps_1
    terms = [(const, "IIII"), (zd, "ZIII"), (zd, "IIZI"), (zb, "IZII"), (zb, "IIIZ"), (0.25 * p.U, "ZIZI")]
    terms += _hopping_terms(p.V1)
    obs = Observable(terms)
    # all-zero parameters give the zero observable
    return obs.simplify(drop_zeros=True) if all(c == 0 for c, _ in terms) else obs


def fermionic_matrix(p: AimParams) -> np.ndarray:
    """16x16 Hamiltonian from explicit Jordan-Wigner creation operators (independent route)."""
    z = np.diag([1.0, -1.0])
    lower = np.array([[0.0, 1.0], [0.0, 0.0]])  # |1><0| is the creation operator for n = |1><1|
    create = lower.T

    def op(j):
        mats = [z] * j + [create] + [np.eye(2)] * (3 - j)
        out = np.array([[1.0]])
        for m in mats:
            out = np.kron(out, m)
        return out

    a = [op(j) for j in range(4)]
    n = [x @ x.T for x in a]
    h = (p.eps_d - p.mu) * (n[0] + n[2]) + p.eps_1 * (n[1] + n[3]) + p.U * n[0] @ n[2]
    for d, c in ((0, 1), (2, 3)):
        h = h + p.V1 * (a[d] @ a[c].T + a[c] @ a[d].T)
    return h


def exact_ground_energy(p: AimParams, convention: str = "reference") -> float:
    obs = build_aim_qubit_hamiltonian(p, convention)
    if obs.is_zero():
        return 0.0
    return float(np.linalg.eigvalsh(obs.matrix())[0])


@dataclass
class AnsatzState:
    theta: np.ndarray
    layout: tuple = ENTANGLERS

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        if self.theta.shape != (NUM_PARAMS,):
            raise ValueError(f"ansatz takes {NUM_PARAMS} parameters")

    def circuit(self) -> Circuit:
        return ansatz_circuit(self.theta)


def ansatz_circuit(theta) -> Circuit:
    """RY on every qubit, CZ from qubit 0 to each other qubit, RY on qubits 1-3."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (NUM_PARAMS,):
        raise ValueError(f"ansatz takes {NUM_PARAMS} parameters, got {theta.shape}")
    c = Circuit(4, metadata={"ansatz": "ry-star-ry", "entanglers": [list(e) for e in ENTANGLERS]})
    for q in range(4):
        c.ry(theta[q], q)
    for a, b in ENTANGLERS:
        c.cz(a, b)
    for k, q in enumerate((1, 2, 3)):
        c.ry(theta[4 + k], q)
    return c


def _exact_energy(theta, hamiltonian: Observable) -> float:
    return hamiltonian.expectation(run_statevector(ansatz_circuit(theta)))


def energy(theta, hamiltonian: Observable, shots: int | None = DEFAULT_SHOTS, backend: Backend | None = None,
           rem: RemCalibration | None = None, rng_seed=None) -> MitigatedValue:
    """Grouped-setting energy estimate.  ``shots=None`` gives the exact expectation."""
    if shots is None and rem is None and (backend is None or not (backend.noise.has_gate_noise
                                                                   or backend.noise.has_readout)):
        return MitigatedValue(_exact_energy(theta, hamiltonian), 0.0)
    return estimate_observable(ansatz_circuit(theta), hamiltonian, shots, backend, rng_seed, rem)


def parameter_shift_gradient(theta, hamiltonian: Observable, shots: int | None = DEFAULT_SHOTS,
                             backend: Backend | None = None, rem: RemCalibration | None = None,
                             rng_seed=None) -> tuple[np.ndarray, np.ndarray]:
    """dE/dtheta_i = (E(theta_i + pi/2) - E(theta_i - pi/2)) / 2, with per-component stderr."""
    theta = np.asarray(theta, dtype=float)
    seeds = derive_seeds(rng_seed, 2 * theta.size)
    grad = np.zeros(theta.size)
    err = np.zeros(theta.size)
    for i in range(theta.size):
        shift = np.zeros(theta.size)
        shift[i] = math.pi / 2
        ep = energy(theta + shift, hamiltonian, shots, backend, rem, seeds[2 * i])
        em = energy(theta - shift, hamiltonian, shots, backend, rem, seeds[2 * i + 1])
        grad[i] = 0.5 * (ep.value - em.value)
        err[i] = 0.5 * math.hypot(ep.stderr, em.stderr)
    return grad, err


@dataclass
class VqeIteration:
    theta: list
    energy: float
    stderr: float
    grad_norm: float

    def to_dict(self) -> dict:
        return {"theta": self.theta, "energy": self.energy, "stderr": self.stderr, "grad_norm": self.grad_norm}


@dataclass
class VqeTrace:
    iterations: list
    exact_energy: float
    converged: bool
    params: AimParams
    shots: int | None
    best_theta: np.ndarray = field(default_factory=lambda: np.zeros(NUM_PARAMS))
    ansatz_layout: tuple = ENTANGLERS
    methods: tuple = ()

    @property
    def final(self) -> VqeIteration:
        return self.iterations[-1]

    @property
    def relative_error(self) -> float:
        return abs(self.final.energy - self.exact_energy) / abs(self.exact_energy)

    def to_dict(self) -> dict:
        return {
            "params": self.params.__dict__, "shots": self.shots, "converged": self.converged,
            "exact_energy": self.exact_energy, "ansatz_entanglers": [list(e) for e in self.ansatz_layout],
            "methods": list(self.methods), "best_theta": list(map(float, self.best_theta)),
            "iterations": [it.to_dict() for it in self.iterations],
        }


def vqe_optimize(p: AimParams, shots: int | None = DEFAULT_SHOTS, max_iters: int = 200,
                 backend: Backend | None = None, rng_seed=None, rem: bool | RemCalibration = False,
                 convention: str = "reference", gtol: float = 1e-3, theta0=None, memory: int = 7,
                 cal_shots: int = 10_000) -> VqeTrace:
    """Limited-memory quasi-Newton descent with parameter-shift gradients.

    Starts from a seeded 0.1 rad perturbation of zero unless ``theta0`` is given.
    With shots, a step is accepted when the new energy does not exceed the
    Armijo target plus two combined standard errors.
    """
    ham = build_aim_qubit_hamiltonian(p, convention)
    rng = as_rng(rng_seed)
    cal = rem if isinstance(rem, RemCalibration) else None
    if rem is True:
        backend = backend or Backend()
        phys = backend.measured_physical(ansatz_circuit(np.zeros(NUM_PARAMS)).measure_all())
        cal = calibrate_rem(4, "correlated", cal_shots, backend, rng, qubits=phys)
    exact_mode = shots is None
    x = 0.1 * rng.standard_normal(NUM_PARAMS) if theta0 is None else np.asarray(theta0, dtype=float).copy()

    def evaluate(t):
        e = energy(t, ham, shots, backend, cal, rng)
        g, _ = parameter_shift_gradient(t, ham, shots, backend, cal, rng)
        return e, g

    e, g = evaluate(x)
    iters = [VqeIteration(list(map(float, x)), e.value, e.stderr, float(np.linalg.norm(g)))]
    s_hist, y_hist = [], []
    converged = False
    for _ in range(max_iters):
        if exact_mode and np.linalg.norm(g) < gtol:
            converged = True
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(s_hist, y_hist))):
            a = (s @ q) / (y @ s)
            alphas.append(a)
            q -= a * y
        if s_hist:
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        for (s, y), a in zip(zip(s_hist, y_hist), reversed(alphas)):
            q += s * (a - (y @ q) / (y @ s))
        d = -q
        if d @ g >= 0:
            d = -g
            s_hist.clear()
            y_hist.clear()
        step = 1.0
        accepted = False
        for _ in range(20):
            xn = x + step * d
            en, gn = evaluate(xn)
            slack = 2 * math.hypot(e.stderr, en.stderr)
            if en.value <= e.value + 1e-4 * step * (g @ d) + slack:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            log.info("line search failed; stopping")
            break
        s, y = xn - x, gn - g
        if s @ y > 1e-12:
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > memory:
                s_hist.pop(0)
                y_hist.pop(0)
        x, e, g = xn, en, gn
        iters.append(VqeIteration(list(map(float, x)), e.value, e.stderr, float(np.linalg.norm(g))))
        if not exact_mode and np.linalg.norm(s) < 1e-4:
            converged = True
            break
    else:
        converged = exact_mode and np.linalg.norm(g) < gtol
    if not exact_mode:
        # fresh estimate at the final point; accepted steps are biased low
        e = energy(x, ham, shots, backend, cal, rng)
        iters.append(VqeIteration(list(map(float, x)), e.value, e.stderr, iters[-1].grad_norm))
    methods = ("REM",) if cal is not None else ()
    return VqeTrace(iters, exact_ground_energy(p, convention), converged, p, shots, x.copy(), ENTANGLERS, methods)
