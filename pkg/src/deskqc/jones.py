"""Three-strand braids, Temperley-Lieb representation, Kauffman bracket and Jones polynomial.

The trace of rho(braid) is estimated with a three-qubit circuit: a Bell pair
on qubits 1-2 makes qubit 1 maximally mixed, qubit 0 is an |+> control, and a
controlled-rho acts on qubit 1.  Then <X_0> = Re tr(rho)/2, <Y_0> = Im tr(rho)/2.
"""

from __future__ import annotations

import cmath
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .backend import Backend
from .circuit import Circuit, is_unitary
from .mitigation import (MitigatedValue, RemCalibration, apply_rem, average_with_stderr, bootstrap_stderr,
                         calibrate_rem, fold_global, pauli_twirl_cz, rem_linear_stderr, zne_extrapolate)
from .observables import measurement_circuit
from .sim import derive_seeds

ADMISSIBLE_INTERVALS = (
    (0.0, math.pi / 6),
    (math.pi / 3, 2 * math.pi / 3),
    (5 * math.pi / 6, 7 * math.pi / 6),
    (4 * math.pi / 3, 5 * math.pi / 3),
    (11 * math.pi / 6, 2 * math.pi),
)


class AdmissibilityError(ValueError):
    pass


@dataclass(frozen=True)
class BraidWord:
    """Letters (generator, sign) written left to right; the rightmost acts first."""

    letters: tuple

    def __post_init__(self):
        letters = tuple((int(g), int(s)) for g, s in self.letters)
        for g, s in letters:
            if g not in (1, 2) or s not in (1, -1):
                raise ValueError(f"invalid braid letter {(g, s)}")
        object.__setattr__(self, "letters", letters)

    @property
    def writhe(self) -> int:
        return sum(s for _, s in self.letters)

    def __len__(self):
        return len(self.letters)

    def __str__(self):
        return " ".join(f"s{g}" + ("" if s > 0 else "^-1") for g, s in self.letters)

    def __add__(self, other: "BraidWord") -> "BraidWord":
        return BraidWord(self.letters + other.letters)

    @classmethod
    def parse(cls, text: str) -> "BraidWord":
        """Accepts e.g. "s1 s1 s2^-1", "1,1,-2" or "hopf" / "trefoil" / "unknot"."""
        named = {"hopf": cls.hopf, "trefoil": cls.trefoil, "unknot": cls.unknot}
        key = text.strip().lower()
        if key in named:
            return named[key]()
        letters = []
        for tok in re.split(r"[\s,]+", key):
            if not tok:
                continue
            m = re.fullmatch(r"(-?)s?([12])(\^-1)?", tok)
            if not m:
                raise ValueError(f"cannot parse braid letter {tok!r}")
            sign = -1 if (m.group(1) or m.group(3)) else 1
            letters.append((int(m.group(2)), sign))
        if not letters:
            raise ValueError("empty braid word")
        return cls(tuple(letters))

    @classmethod
    def power(cls, gen: int, k: int) -> "BraidWord":
        return cls(tuple((gen, 1 if k > 0 else -1) for _ in range(abs(k))))

    @classmethod
    def hopf(cls) -> "BraidWord":
        return cls.power(1, 2)

    @classmethod
    def trefoil(cls) -> "BraidWord":
        return cls.power(1, 3)

    @classmethod
    def unknot(cls) -> "BraidWord":
        return cls.power(1, 1)


def delta_of(theta: float) -> float:
    a = cmath.exp(1j * theta)
    return float((-(a**2) - a**-2).real)


def is_admissible(theta: float, atol: float = 1e-12) -> bool:
    return delta_of(theta) ** 2 >= 1 - atol


@dataclass(frozen=True)
class TLRep:
    theta: float
    A: complex
    delta: float
    U1: np.ndarray
    U2: np.ndarray
    rho_sigma1: np.ndarray
    rho_sigma2: np.ndarray

    def generator(self, gen: int, sign: int) -> np.ndarray:
        m = self.rho_sigma1 if gen == 1 else self.rho_sigma2
        return m if sign > 0 else m.conj().T


def tl_generators(theta: float, atol: float = 1e-10) -> TLRep:
    """Temperley-Lieb generators and rho(sigma_i) = A I + A^-1 U_i at A = e^(i theta)."""
    if not is_admissible(theta):
        raise AdmissibilityError(f"theta = {theta:.6g} gives delta^2 < 1; the representation is not unitary")
    A = cmath.exp(1j * theta)
    d = delta_of(theta)
    s = math.sqrt(max(1 - d**-2, 0.0))
    u1 = np.array([[d, 0], [0, 0]], dtype=float)
    u2 = np.array([[1 / d, s], [s, d - 1 / d]], dtype=float)
    r1 = A * np.eye(2) + u1 / A
    r2 = A * np.eye(2) + u2 / A
    for u in (u1, u2):
        if np.abs(u @ u - d * u).max() > atol:
            raise AssertionError("U_i^2 = delta U_i violated")
    if np.abs(u1 @ u2 @ u1 - u1).max() > atol or np.abs(u2 @ u1 @ u2 - u2).max() > atol:
        raise AssertionError("Temperley-Lieb relations violated")
    if not (is_unitary(r1, atol) and is_unitary(r2, atol)):
        raise AssertionError("braid representation is not unitary")
    return TLRep(float(theta), A, d, u1, u2, r1, r2)


def braid_matrix(rep: TLRep, word: BraidWord) -> np.ndarray:
    m = np.eye(2, dtype=complex)
    for g, s in word.letters:
        m = m @ rep.generator(g, s)
    return m


def kauffman_bracket_closure(rep: TLRep, word: BraidWord) -> complex:
    """(tr rho(word) + A^w (delta^2 - 2)) / delta."""
    tr = np.trace(braid_matrix(rep, word))
    return complex((tr + rep.A**word.writhe * (rep.delta**2 - 2)) / rep.delta)


def jones_polynomial(rep: TLRep, word: BraidWord) -> complex:
    return complex((-(rep.A**3)) ** (-word.writhe) * kauffman_bracket_closure(rep, word))


# closed forms (A = e^(i theta), t = A^-4)
def trefoil_bracket(A: complex) -> complex:
    return -(A**5) - A**-3 + A**-7


def hopf_bracket(A: complex) -> complex:
    return -(A**4) - A**-4


def trefoil_jones(t: complex) -> complex:
    return -(t**4) + t**3 + t


def hopf_jones(A: complex) -> complex:
    return -(A**-10) - A**-2


# ---------------------------------------------------------------------------
# circuits
# ---------------------------------------------------------------------------

def controlled(u: np.ndarray) -> np.ndarray:
    m = np.eye(4, dtype=complex)
    m[2:, 2:] = u
    return m


def trace_circuit(u, basis: str | None = None) -> Circuit:
    """|+> control on qubit 0, Bell pair on qubits 1-2, controlled-u onto qubit 1.

    With ``basis`` in {"X", "Y"} the basis change and a measurement of qubit 0
    are appended.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not is_unitary(u):
        raise ValueError("trace_circuit needs a 2x2 unitary")
    c = Circuit(3)
    c.h(0)
    c.h(1)
    c.cnot(1, 2)
    c.unitary(controlled(u), 0, 1)
    if basis is None:
        return c
    if basis not in ("X", "Y"):
        raise ValueError("basis must be X or Y")
    return measurement_circuit(c, basis, [0])


def default_theta_grid(n: int = 24) -> np.ndarray:
    """Points spread over the admissible intervals in proportion to their length."""
    lengths = np.array([b - a for a, b in ADMISSIBLE_INTERVALS])
    alloc = np.floor(n * lengths / lengths.sum()).astype(int)
    while alloc.sum() < n:
        alloc[np.argmax(n * lengths / lengths.sum() - alloc)] += 1
    pts = []
    for (a, b), k in zip(ADMISSIBLE_INTERVALS, alloc):
        pts.extend(a + (np.arange(k) + 0.5) * (b - a) / k)
    return np.array(pts)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------

@dataclass
class KnotReport:
    braid: str
    writhe: int
    theta: float
    trace_theory: complex
    kauffman: complex
    jones_value: complex
    estimates: dict = field(default_factory=dict)  # method -> (re MitigatedValue, im MitigatedValue)

    def trace_estimate(self, method: str) -> complex:
        re_, im_ = self.estimates[method]
        return complex(2 * re_.value, 2 * im_.value)

    def to_dict(self) -> dict:
        d = {
            "braid": self.braid, "writhe": self.writhe, "theta": self.theta,
            "trace_theory": [self.trace_theory.real, self.trace_theory.imag],
            "kauffman": [self.kauffman.real, self.kauffman.imag],
            "jones_value": [self.jones_value.real, self.jones_value.imag],
            "estimates": {},
        }
        for m, (re_, im_) in self.estimates.items():
            d["estimates"][m] = {"re": re_.to_dict(), "im": im_.to_dict()}
        return d


def _expect(backend: Backend, circ, shots: int, seed, cal: RemCalibration | None,
            resamples: int | None = None) -> MitigatedValue:
    counts = backend.run(circ, shots, seed)
    w = np.array([1.0, -1.0])
    if cal is None:
        p = counts.probabilities()
        err = (bootstrap_stderr(counts, {"0": 1.0, "1": -1.0}, resamples, seed) if resamples
               else math.sqrt(max(1 - (w @ p) ** 2, 0.0) / shots))
        return MitigatedValue(w @ p, err, set())
    p = apply_rem(counts, cal)
    return MitigatedValue(w @ p, rem_linear_stderr(counts, cal, w), {"REM"})


def estimate_knot_trace(word: BraidWord, thetas=None, shots: int = 20_000,
                        mitigation: Iterable[str] = ("REM",), backend: Backend | None = None, rng_seed=None,
                        rc_count: int = 30, zne_scales: Sequence[int] = (1, 3, 5), cal_shots: int = 10_000,
                        resamples: int = 1000, rc_shots: int | None = None) -> list[KnotReport]:
    """Per theta: raw, REM and (optionally) REM+RC+ZNE estimates of Re/Im tr rho(word) / 2.

    ``mitigation`` is a subset of {"REM", "RC", "ZNE"}.  The RC+ZNE branch
    averages ``rc_count`` twirled variants at every fold scale and
    extrapolates the scale dependence to zero.
    """
    backend = backend or Backend()
    mitigation = {m.upper() for m in mitigation}
    thetas = default_theta_grid() if thetas is None else np.asarray(thetas, dtype=float)
    rc_shots = rc_shots or shots
    seeds = derive_seeds(rng_seed, len(thetas) + 1)
    cal = None
    reports = []
    for theta, seed in zip(thetas, seeds[1:]):
        rep = tl_generators(float(theta))
        u = braid_matrix(rep, word)
        report = KnotReport(str(word), word.writhe, float(theta), complex(np.trace(u)),
                            kauffman_bracket_closure(rep, word), jones_polynomial(rep, word))
        per_method: dict[str, list[MitigatedValue]] = {}
        bseeds = derive_seeds(seed, 2)
        for basis, bseed in zip(("X", "Y"), bseeds):
            native = backend.compile(trace_circuit(u, basis))
            if "REM" in mitigation and cal is None:
                phys = native.circuit.measured_qubits
                cal = calibrate_rem(1, "correlated", cal_shots, backend, seeds[0], qubits=phys)
            s_raw, s_rem, s_rc = derive_seeds(bseed, 3)
            per_method.setdefault("raw", []).append(_expect(backend, native, shots, s_raw, None, resamples))
            if "REM" in mitigation:
                per_method.setdefault("REM", []).append(_expect(backend, native, shots, s_rem, cal))
            if "RC" in mitigation or "ZNE" in mitigation:
                tag = "+".join(m for m in ("REM", "RC", "ZNE") if m in mitigation)
                per_method.setdefault(tag, []).append(
                    _rc_zne(native, backend, rc_shots, s_rc, cal if "REM" in mitigation else None,
                            rc_count if "RC" in mitigation else 0,
                            zne_scales if "ZNE" in mitigation else (1,)))
        report.estimates = {m: (v[0], v[1]) for m, v in per_method.items()}
        reports.append(report)
    return reports


def _rc_zne(native, backend, shots, seed, cal, rc_count, scales) -> MitigatedValue:
    variants = pauli_twirl_cz(native, rc_count, derive_seeds(seed, 1)[0]) if rc_count else [native]
    points = []
    run_seeds = derive_seeds(seed, len(scales) * len(variants) + 1)[1:]
    it = iter(run_seeds)
    for scale in scales:
        vals, errs = [], []
        for v in variants:
            mv = _expect(backend, fold_global(v, scale), shots, next(it), cal)
            vals.append(mv.value)
            errs.append(mv.stderr)
        mean, sem = average_with_stderr(vals)
        # shot noise floor when the variants happen to agree
        floor = math.sqrt(np.sum(np.square(errs))) / len(errs)
        points.append((scale, mean, max(sem, floor)))
    tags = {"RC"} if rc_count else set()
    if cal is not None:
        tags.add("REM")
    if len(points) == 1:
        return MitigatedValue(points[0][1], points[0][2], tags)
    z = zne_extrapolate(points)
    return MitigatedValue(z.value, z.stderr, tags | {"ZNE"})
