"""Circuit IR: gates over indexed qubits, with dense matrices for every kind.

Qubit ordering follows the "top wire is the first qubit" convention: qubit 0
is the most significant bit of a basis-state index and the leftmost
character of a bitstring.  This is the opposite of Qiskit's ordering.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

UNITARY_ATOL = 1e-10

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
S = np.diag([1, 1j]).astype(complex)
SDG = np.diag([1, -1j]).astype(complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
CNOT = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex
)
SWAP = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex
)
PAULIS = {"I": I2, "X": X, "Y": Y, "Z": Z}


def r_matrix(theta: float, phi: float) -> np.ndarray:
    """R(theta, phi) = exp[-i theta (cos(phi) X + sin(phi) Y) / 2]."""
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array(
        [[c, -1j * np.exp(-1j * phi) * s], [-1j * np.exp(1j * phi) * s, c]],
        dtype=complex,
    )


def rz_matrix(lam: float) -> np.ndarray:
    return np.diag([np.exp(-0.5j * lam), np.exp(0.5j * lam)])


def ry_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


class CircuitError(ValueError):
    pass


def is_unitary(u: np.ndarray, atol: float = UNITARY_ATOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0]), 2) < atol)


# kind -> (arity, number of angle params)
GATE_SPECS: dict[str, tuple[int, int]] = {
    "R": (1, 2),
    "RZ": (1, 1),
    "RY": (1, 1),
    "H": (1, 0),
    "S": (1, 0),
    "Sdg": (1, 0),
    "X": (1, 0),
    "Y": (1, 0),
    "Z": (1, 0),
    "U2x2": (1, 0),
    "CZ": (2, 0),
    "CNOT": (2, 0),
    "U4x4": (2, 0),
    "Measure": (1, 0),
    "Barrier": (-1, 0),
}

_FIXED = {"H": H, "S": S, "Sdg": SDG, "X": X, "Y": Y, "Z": Z, "CZ": CZ, "CNOT": CNOT}


@dataclass(frozen=True, eq=False)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    params: tuple[float, ...] = ()
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in GATE_SPECS:
            raise CircuitError(f"unknown gate kind {self.kind!r}")
        arity, nparams = GATE_SPECS[self.kind]
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        if arity >= 0 and len(self.qubits) != arity:
            raise CircuitError(f"{self.kind} acts on {arity} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise CircuitError(f"repeated qubit in {self.kind}{self.qubits}")
        if len(self.params) != nparams:
            raise CircuitError(f"{self.kind} takes {nparams} parameter(s)")
        if not all(math.isfinite(p) for p in self.params):
            raise CircuitError(f"non-finite angle in {self.kind}")
        if self.kind in ("U2x2", "U4x4"):
            if self.matrix is None:
                raise CircuitError(f"{self.kind} needs a matrix payload")
            m = np.array(self.matrix, dtype=complex)
            dim = 2 if self.kind == "U2x2" else 4
            if m.shape != (dim, dim):
                raise CircuitError(f"{self.kind} payload has shape {m.shape}")
            if not is_unitary(m):
                raise CircuitError(f"{self.kind} payload is not unitary")
            m.setflags(write=False)
            object.__setattr__(self, "matrix", m)

    @property
    def is_unitary_op(self) -> bool:
        return self.kind not in ("Measure", "Barrier")

    def to_matrix(self) -> np.ndarray:
        k = self.kind
        if k in _FIXED:
            return _FIXED[k]
        if k == "R":
            return r_matrix(*self.params)
        if k == "RZ":
            return rz_matrix(self.params[0])
        if k == "RY":
            return ry_matrix(self.params[0])
        if k in ("U2x2", "U4x4"):
            return self.matrix
        raise CircuitError(f"{k} has no unitary matrix")

    def inverse(self) -> "Gate":
        k = self.kind
        if k == "R":
            theta, phi = self.params
            return Gate("R", self.qubits, (theta, (phi + math.pi) % (2 * math.pi)))
        if k in ("RZ", "RY"):
            return Gate(k, self.qubits, (-self.params[0],))
        if k == "S":
            return Gate("Sdg", self.qubits)
        if k == "Sdg":
            return Gate("S", self.qubits)
        if k in ("U2x2", "U4x4"):
            return Gate(k, self.qubits, matrix=self.matrix.conj().T)
        if k in ("Measure", "Barrier"):
            raise CircuitError(f"{k} has no inverse")
        return self

    def remap(self, mapping: Sequence[int] | dict[int, int]) -> "Gate":
        return Gate(self.kind, tuple(mapping[q] for q in self.qubits), self.params, self.matrix)

    def key(self) -> tuple:
        """Structural identity (kind, qubits, rounded params, rounded matrix)."""
        mat = None
        if self.matrix is not None:
            mat = tuple(np.round(self.matrix, 12).ravel().tolist())
        return (self.kind, self.qubits, tuple(round(p, 12) for p in self.params), mat)

    def __eq__(self, other):
        return isinstance(other, Gate) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        args = ", ".join(f"{p:.6g}" for p in self.params)
        return f"{self.kind}({args}){list(self.qubits)}" if args else f"{self.kind}{list(self.qubits)}"


@dataclass
class Circuit:
    num_qubits: int
    gates: list[Gate] = field(default_factory=list)
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if int(self.num_qubits) < 1:
            raise CircuitError("num_qubits must be positive")
        self.num_qubits = int(self.num_qubits)
        gates, self.gates = list(self.gates), []
        for g in gates:
            self.append(g)

    # -- building ---------------------------------------------------------
    def append(self, gate: Gate) -> "Circuit":
        if any(q < 0 or q >= self.num_qubits for q in gate.qubits):
            raise CircuitError(f"{gate!r} out of range for {self.num_qubits} qubits")
        if self.gates and self.gates[-1].kind == "Measure" and gate.kind not in ("Measure", "Barrier"):
            raise CircuitError("only terminal measurements are supported")
        self.gates.append(gate)
        return self

    def add(self, kind: str, *qubits: int, params: Iterable[float] = (), matrix=None) -> "Circuit":
        return self.append(Gate(kind, tuple(qubits), tuple(params), matrix))

    def r(self, theta, phi, q):
        return self.add("R", q, params=(theta, phi))

    def rz(self, lam, q):
        return self.add("RZ", q, params=(lam,))

    def ry(self, theta, q):
        return self.add("RY", q, params=(theta,))

    def h(self, q):
        return self.add("H", q)

    def s(self, q):
        return self.add("S", q)

    def sdg(self, q):
        return self.add("Sdg", q)

    def x(self, q):
        return self.add("X", q)

    def y(self, q):
        return self.add("Y", q)

    def z(self, q):
        return self.add("Z", q)

    def cz(self, a, b):
        return self.add("CZ", a, b)

    def cnot(self, control, target):
        return self.add("CNOT", control, target)

    def unitary(self, matrix, *qubits):
        kind = "U2x2" if len(qubits) == 1 else "U4x4"
        return self.add(kind, *qubits, matrix=matrix)

    def barrier(self, *qubits):
        return self.add("Barrier", *(qubits or range(self.num_qubits)))

    def measure(self, *qubits):
        for q in qubits:
            self.add("Measure", q)
        return self

    def measure_all(self):
        return self.measure(*range(self.num_qubits))

    def extend(self, gates: Iterable[Gate]) -> "Circuit":
        for g in gates:
            self.append(g)
        return self

    # -- views --------------------------------------------------------------
    def copy(self) -> "Circuit":
        return Circuit(self.num_qubits, list(self.gates), dict(self.metadata))

    @property
    def measured_qubits(self) -> list[int]:
        return [g.qubits[0] for g in self.gates if g.kind == "Measure"]

    @property
    def unitary_gates(self) -> list[Gate]:
        return [g for g in self.gates if g.is_unitary_op]

    def without_measurements(self) -> "Circuit":
        return Circuit(self.num_qubits, [g for g in self.gates if g.kind != "Measure"], dict(self.metadata))

    def inverse(self) -> "Circuit":
        return Circuit(
            self.num_qubits,
            [g.inverse() for g in reversed(self.gates) if g.is_unitary_op],
            dict(self.metadata),
        )

    def count(self, kind: str) -> int:
        return sum(g.kind == kind for g in self.gates)

    def to_unitary(self) -> np.ndarray:
        """Dense unitary by explicit Kronecker embedding (intended for n <= ~6)."""
        n = self.num_qubits
        u = np.eye(2**n, dtype=complex)
        for g in self.unitary_gates:
            u = embed(g.to_matrix(), g.qubits, n) @ u
        return u

    def __len__(self):
        return len(self.gates)

    def __iter__(self):
        return iter(self.gates)

    # -- interchange ------------------------------------------------------
    def to_dict(self) -> dict:
        gates = []
        for g in self.gates:
            d: dict[str, Any] = {"kind": g.kind, "qubits": list(g.qubits)}
            if g.params:
                d["params"] = list(g.params)
            if g.matrix is not None:
                d["matrix"] = [[[z.real, z.imag] for z in row] for row in g.matrix]
            gates.append(d)
        return {"num_qubits": self.num_qubits, "gates": gates, "metadata": self.metadata}

    @classmethod
    def from_dict(cls, data: dict) -> "Circuit":
        c = cls(int(data["num_qubits"]), metadata=dict(data.get("metadata", {})))
        for d in data["gates"]:
            matrix = None
            if "matrix" in d:
                matrix = np.array([[complex(re_, im) for re_, im in row] for row in d["matrix"]])
            c.append(Gate(d["kind"], tuple(d["qubits"]), tuple(d.get("params", ())), matrix))
        return c

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_json(cls, text: str) -> "Circuit":
        return cls.from_dict(json.loads(text))

    def to_qasm(self) -> str:
        return to_qasm(self)

    @classmethod
    def from_qasm(cls, text: str) -> "Circuit":
        return from_qasm(text)


def embed(mat: np.ndarray, qubits: Sequence[int], n: int) -> np.ndarray:
    """Full 2^n operator for `mat` acting on `qubits` (listed MSB-first)."""
    k = len(qubits)
    rest = [q for q in range(n) if q not in qubits]
    full = np.kron(mat, np.eye(2 ** (n - k)))
    # full acts on ordering qubits + rest; permute back to 0..n-1
    order = list(qubits) + rest
    perm = np.argsort(order)
    t = full.reshape((2,) * (2 * n))
    t = t.transpose(list(perm) + [n + p for p in perm])
    return t.reshape(2**n, 2**n)


# ---------------------------------------------------------------------------
# OpenQASM 2 subset
# ---------------------------------------------------------------------------

_QASM_NAMES = {"H": "h", "S": "s", "Sdg": "sdg", "X": "x", "Y": "y", "Z": "z", "CZ": "cz", "CNOT": "cx"}


def to_qasm(circuit: Circuit) -> str:
    """OpenQASM 2 text.  R(theta, phi) is written as the custom gate ``r``.

    U2x2/U4x4 payloads have no QASM spelling and raise.  The register
    order matches the circuit (q[0] is the most significant bit here, so a
    Qiskit reader will report reversed bitstrings).
    """
    n = circuit.num_qubits
    lines = [
        "OPENQASM 2.0;",
        'include "qelib1.inc";',
        "gate r(theta, phi) a { u3(theta, phi - pi/2, pi/2 - phi) a; }",
        f"qreg q[{n}];",
    ]
    nmeas = len(circuit.measured_qubits)
    if nmeas:
        lines.append(f"creg c[{nmeas}];")
    m = 0
    for g in circuit.gates:
        qs = ",".join(f"q[{q}]" for q in g.qubits)
        if g.kind in _QASM_NAMES:
            lines.append(f"{_QASM_NAMES[g.kind]} {qs};")
        elif g.kind == "R":
            lines.append(f"r({g.params[0]!r},{g.params[1]!r}) {qs};")
        elif g.kind == "RZ":
            lines.append(f"rz({g.params[0]!r}) {qs};")
        elif g.kind == "RY":
            lines.append(f"ry({g.params[0]!r}) {qs};")
        elif g.kind == "Barrier":
            lines.append(f"barrier {qs};")
        elif g.kind == "Measure":
            lines.append(f"measure {qs} -> c[{m}];")
            m += 1
        else:
            raise CircuitError(f"{g.kind} cannot be written as OpenQASM 2")
    return "\n".join(lines) + "\n"


_STMT = re.compile(r"^(\w+)\s*(?:\(([^)]*)\))?\s+(.+)$")


def _angle(expr: str) -> float:
    expr = expr.strip()
    if not re.fullmatch(r"[0-9eE+\-*/.() pi]+", expr):
        raise CircuitError(f"unsupported angle expression {expr!r}")
    return float(eval(expr, {"__builtins__": {}}, {"pi": math.pi}))


def from_qasm(text: str) -> Circuit:
    rev = {v: k for k, v in _QASM_NAMES.items()}
    n = None
    ops: list[tuple[str, tuple[int, ...], tuple[float, ...]]] = []
    text = re.sub(r"gate\s[^{]*\{[^}]*\}", "", text)
    for raw in text.split(";"):
        line = re.sub(r"//.*", "", raw).strip()
        if not line or line.startswith(("OPENQASM", "include", "creg", "gate ")):
            continue
        if line.startswith("qreg"):
            n = int(re.search(r"\[(\d+)\]", line).group(1))
            continue
        if line.startswith("measure"):
            hit = re.search(r"q\[(\d+)\]", line)
            if hit:
                ops.append(("Measure", (int(hit.group(1)),), ()))
            elif n is not None:  # whole-register measure
                ops.extend(("Measure", (q,), ()) for q in range(n))
            else:
                raise CircuitError("measure before qreg declaration")
            continue
        m = _STMT.match(line)
        if not m:
            raise CircuitError(f"cannot parse QASM statement {line!r}")
        name, args, targets = m.groups()
        qubits = tuple(int(x) for x in re.findall(r"q\[(\d+)\]", targets))
        params = tuple(_angle(a) for a in args.split(",")) if args else ()
        if name in rev:
            ops.append((rev[name], qubits, ()))
        elif name in ("r", "rz", "ry"):
            ops.append((name.upper(), qubits, params))
        elif name == "barrier":
            ops.append(("Barrier", qubits, ()))
        else:
            raise CircuitError(f"unsupported QASM gate {name!r}")
    if n is None:
        raise CircuitError("missing qreg declaration")
    c = Circuit(n)
    for kind, qs, ps in ops:
        c.append(Gate(kind, qs, ps))
    return c
