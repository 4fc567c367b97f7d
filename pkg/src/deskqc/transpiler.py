"""Lowering to the native gate set {R(theta, phi), CZ} on a coupling map.

Pipeline used by :func:`transpile`: route (SWAP insertion) -> decompose every
gate into R/RZ/CZ -> virtual-Z sweep that merges runs of single-qubit gates
and carries every RZ forward as a phase frame.  Frames commute with CZ and
are dropped in front of Z-basis measurements, so the exported gate list holds
only R, CZ, Measure and Barrier.  Frames left at the end of unmeasured wires
are kept on :class:`NativeCircuit` so callers can restore exact equivalence.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .circuit import CZ, H, S, X, Y, Z, Circuit, CircuitError, Gate, is_unitary, rz_matrix

TWO_PI = 2 * math.pi
ANGLE_ATOL = 1e-11
NATIVE_KINDS = frozenset({"R", "CZ", "Measure", "Barrier"})


class TranspileError(CircuitError):
    pass


def _norm_angle(x: float) -> float:
    x = math.fmod(x, TWO_PI)
    if x < 0:
        x += TWO_PI
    if x > TWO_PI - ANGLE_ATOL or x < ANGLE_ATOL:
        return 0.0
    return x


# ---------------------------------------------------------------------------
# topology
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Topology:
    num_qubits: int
    edges: frozenset
    center: int | None = None

    def __post_init__(self):
        edges = frozenset(frozenset((int(a), int(b))) for a, b in self.edges)
        for e in edges:
            if len(e) != 2 or any(not 0 <= q < self.num_qubits for q in e):
                raise TranspileError(f"invalid edge {sorted(e)} for {self.num_qubits} qubits")
        object.__setattr__(self, "edges", edges)
        if self.center is not None and not 0 <= self.center < self.num_qubits:
            raise TranspileError("center out of range")
        if not self.is_connected():
            raise TranspileError("coupling map must be connected")

    @classmethod
    def star(cls, num_qubits: int = 5, center: int = 2) -> "Topology":
        """Star coupling map; the default is the 5-qubit device with qubit 3 (1-based) in the middle."""
        return cls(num_qubits, frozenset((center, q) for q in range(num_qubits) if q != center), center)

    @classmethod
    def line(cls, num_qubits: int) -> "Topology":
        return cls(num_qubits, frozenset((q, q + 1) for q in range(num_qubits - 1)))

    @classmethod
    def full(cls, num_qubits: int) -> "Topology":
        return cls(num_qubits, frozenset((a, b) for a in range(num_qubits) for b in range(a + 1, num_qubits)))

    def has_edge(self, a: int, b: int) -> bool:
        return frozenset((a, b)) in self.edges

    def neighbors(self, q: int) -> list[int]:
        return sorted(next(iter(e - {q})) for e in self.edges if q in e)

    def degree(self, q: int) -> int:
        return sum(q in e for e in self.edges)

    def shortest_path(self, a: int, b: int) -> list[int]:
        prev = {a: None}
        queue = deque([a])
        while queue:
            q = queue.popleft()
            if q == b:
                break
            for nb in self.neighbors(q):
                if nb not in prev:
                    prev[nb] = q
                    queue.append(nb)
        if b not in prev:
            raise TranspileError(f"qubits {a} and {b} are disconnected in the topology")
        path = [b]
        while path[-1] != a:
            path.append(prev[path[-1]])
        return path[::-1]

    def is_connected(self) -> bool:
        try:
            for q in range(1, self.num_qubits):
                self.shortest_path(0, q)
        except TranspileError:
            return False
        return True

    def to_dict(self) -> dict:
        return {"num_qubits": self.num_qubits, "edges": sorted(sorted(e) for e in self.edges), "center": self.center}

    @classmethod
    def from_dict(cls, d: dict) -> "Topology":
        return cls(int(d["num_qubits"]), frozenset(tuple(e) for e in d["edges"]), d.get("center"))


DEFAULT_TOPOLOGY = Topology.star()


@dataclass
class NativeCircuit:
    """Transpiled circuit over physical qubits.

    ``initial_layout[i]`` / ``final_layout[i]`` give the physical qubit that
    holds logical qubit ``i`` at the start / end of the circuit.  ``frames``
    maps physical qubits to the virtual RZ angle still pending at the end.
    """

    circuit: Circuit
    initial_layout: list[int]
    final_layout: list[int]
    frames: dict[int, float] = field(default_factory=dict)
    swaps: int = 0
    num_logical: int | None = None

    @property
    def layout(self) -> list[int]:
        return self.final_layout

    def with_frames(self) -> Circuit:
        """Exported circuit with the pending frames re-inserted as RZ gates before measurement."""
        body = [g for g in self.circuit.gates if g.kind != "Measure"]
        meas = [g for g in self.circuit.gates if g.kind == "Measure"]
        frames = [Gate("RZ", (q,), (lam,)) for q, lam in sorted(self.frames.items()) if lam]
        return Circuit(self.circuit.num_qubits, body + frames + meas, dict(self.circuit.metadata))

    def check(self, topology: Topology | None = None) -> None:
        for g in self.circuit.gates:
            if g.kind not in NATIVE_KINDS:
                raise TranspileError(f"non-native gate {g!r} in exported circuit")
            if g.kind == "CZ" and topology is not None and not topology.has_edge(*g.qubits):
                raise TranspileError(f"CZ on {g.qubits} is not a topology edge")
            if g.kind == "R":
                theta, phi = g.params
                if not (0 <= theta < TWO_PI and 0 <= phi < TWO_PI):
                    raise TranspileError(f"angle out of [0, 2pi) in {g!r}")

    def to_dict(self) -> dict:
        return {
            "circuit": self.circuit.to_dict(),
            "initial_layout": list(self.initial_layout),
            "final_layout": list(self.final_layout),
            "frames": {str(k): v for k, v in self.frames.items()},
            "swaps": self.swaps,
        }


# ---------------------------------------------------------------------------
# single-qubit decomposition and virtual Z
# ---------------------------------------------------------------------------

def decompose_1q(u, qubit: int = 0, atol: float = 1e-10) -> list[Gate]:
    """Write ``u`` as R(theta, phi) followed in time by RZ(lam), up to global phase.

    Either gate is omitted when it is the identity.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (2, 2) or not is_unitary(u, atol):
        raise TranspileError("decompose_1q needs a 2x2 unitary")
    u = u / np.sqrt(np.linalg.det(u))
    a, b = u[0, 0], u[1, 0]
    if abs(b) < 1e-12:
        lam = -2 * np.angle(a)
        theta, phi = 0.0, 0.0
    else:
        theta = 2 * math.atan2(abs(b), abs(a))
        lam = -2 * np.angle(a) if abs(a) > 1e-12 else 0.0
        phi = np.angle(b) + math.pi / 2 - lam / 2
    gates = []
    theta = _norm_angle(theta)
    if theta:
        gates.append(Gate("R", (qubit,), (theta, _norm_angle(phi))))
    lam = _norm_angle(lam)
    if lam:
        gates.append(Gate("RZ", (qubit,), (lam,)))
    return gates


def push_rz_through(rz_angle: float, gate: Gate) -> Gate:
    """Return R(theta, phi + lam), using RZ(lam) R(theta, phi) = R(theta, phi + lam) RZ(lam)."""
    if gate.kind != "R":
        raise TranspileError("push_rz_through expects an R gate")
    theta, phi = gate.params
    return Gate("R", gate.qubits, (theta, _norm_angle(phi + rz_angle)))


def _sweep(circuit: Circuit, carry_frames: bool) -> tuple[Circuit, dict[int, float]]:
    """Merge single-qubit runs per wire.

    With ``carry_frames`` the RZ part of each run is carried across CZ and
    Barrier (it commutes with both), dropped before Measure, and returned as
    leftover frames.  Otherwise every run is flushed as R plus trailing RZ.
    """
    n = circuit.num_qubits
    acc: list[np.ndarray | None] = [None] * n
    run: list[list[Gate]] = [[] for _ in range(n)]  # original gates of the pending run
    dropped: dict[int, float] = {}
    out: list[Gate] = []
    tail: list[Gate] = []  # measurements are terminal; keep them after every flush

    def flush(q: int, keep_rz: bool) -> float:
        if acc[q] is None:
            return 0.0
        if not carry_frames and len(run[q]) == 1:
            # a lone gate is already as short as it gets
            out.append(run[q][0])
            acc[q], run[q] = None, []
            return 0.0
        parts = decompose_1q(acc[q], q)
        acc[q], run[q] = None, []
        lam = 0.0
        for g in parts:
            if g.kind == "R":
                out.append(g)
            else:
                lam = g.params[0]
        if keep_rz and lam:
            acc[q] = rz_matrix(lam)
        elif lam and not carry_frames:
            out.append(Gate("RZ", (q,), (lam,)))
        return lam

    for g in circuit.gates:
        if g.kind == "Barrier" and tail:
            tail.append(g)
        elif g.kind == "Barrier" or (g.is_unitary_op and len(g.qubits) > 1):
            if carry_frames and g.kind not in ("CZ", "Barrier"):
                raise TranspileError(f"virtual-Z sweep cannot commute frames through {g.kind}")
            for q in g.qubits:
                flush(q, keep_rz=carry_frames)
            out.append(g)
        elif g.kind == "Measure":
            q = g.qubits[0]
            lam = flush(q, keep_rz=False)
            if carry_frames and lam:
                dropped[q] = lam
            tail.append(g)
        else:
            q = g.qubits[0]
            m = g.to_matrix()
            acc[q] = m if acc[q] is None else m @ acc[q]
            run[q].append(g)
    frames = dict(dropped)
    for q in range(n):
        lam = flush(q, keep_rz=False)
        if carry_frames and lam:
            frames[q] = lam
    return Circuit(n, out + tail, dict(circuit.metadata)), frames


def merge_1q(circuit: Circuit) -> Circuit:
    """Fuse every run of single-qubit gates into at most R followed by one RZ."""
    return _sweep(circuit, carry_frames=False)[0]


def absorb_virtual_z(circuit: Circuit) -> tuple[Circuit, dict[int, float]]:
    """Merge runs and turn every RZ into a frame; input may hold only 1q gates, CZ, Measure, Barrier."""
    return _sweep(circuit, carry_frames=True)


# ---------------------------------------------------------------------------
# two-qubit decomposition
# ---------------------------------------------------------------------------

_MAGIC = np.array([[1, 0, 0, 1j], [0, 1j, 1, 0], [0, 1j, -1, 0], [1, 0, 0, -1j]]) / math.sqrt(2)
_XX, _YY, _ZZ = np.kron(X, X), np.kron(Y, Y), np.kron(Z, Z)
# eigenvalues of (I, XX, YY, ZZ) in the magic basis, as rows
_MAGIC_SIGNS = np.real(np.array([np.ones(4)] + [np.diag(_MAGIC.conj().T @ P @ _MAGIC) for P in (_XX, _YY, _ZZ)]))


def kron_factor(m: np.ndarray, atol: float = 1e-8) -> tuple[np.ndarray, np.ndarray] | None:
    """Split a local 4x4 unitary into (A, B) with m = A (x) B up to phase, or None."""
    t = m.reshape(2, 2, 2, 2).transpose(0, 2, 1, 3).reshape(4, 4)
    uu, s, vh = np.linalg.svd(t)
    if s[1] > atol * max(s[0], 1):
        return None
    a = uu[:, 0].reshape(2, 2) * math.sqrt(s[0])
    b = vh[0].reshape(2, 2) * math.sqrt(s[0])
    if np.linalg.norm(np.kron(a, b) - m) > 1e-6:
        return None
    return a / math.sqrt(abs(np.linalg.det(a))), b / math.sqrt(abs(np.linalg.det(b)))


def _real_orthogonal_eig(m: np.ndarray) -> np.ndarray:
    """Real orthogonal P diagonalizing the complex symmetric unitary m (P^T m P diagonal)."""
    rng = np.random.default_rng(1234)
    for _ in range(16):
        c = rng.uniform(0.1, 1.0)
        _, p = np.linalg.eigh(m.real + c * m.imag)
        d = p.T @ m @ p
        if np.linalg.norm(d - np.diag(np.diag(d))) < 1e-9:
            return p
    raise TranspileError("failed to diagonalize the KAK symmetric matrix")


def kak(u: np.ndarray):
    """u = k1 . exp(i(a XX + b YY + c ZZ)) . k2 up to phase; k1, k2 local.

    Returns (k1, (a, b, c), k2) with a, b, c reduced to (-pi/4, pi/4].
    """
    u = u / np.linalg.det(u) ** 0.25
    um = _MAGIC.conj().T @ u @ _MAGIC
    p = _real_orthogonal_eig(um.T @ um)
    if np.linalg.det(p) < 0:
        p[:, 0] *= -1
    d2 = np.diag(p.T @ um.T @ um @ p)
    d = np.sqrt(d2)
    k1m = um @ p @ np.diag(1 / d)
    if np.linalg.det(k1m).real < 0:
        d[0] *= -1
        k1m = um @ p @ np.diag(1 / d)
    coef = _MAGIC_SIGNS @ np.angle(d) / 4  # (phase, a, b, c)
    k1 = _MAGIC @ k1m @ _MAGIC.conj().T
    k2 = _MAGIC @ p.T @ _MAGIC.conj().T
    abc = []
    for val, pauli in zip(coef[1:], (_XX, _YY, _ZZ)):
        k = math.floor(val / (math.pi / 2) + 0.5 - 1e-12)
        val -= k * math.pi / 2
        if k % 2:
            k1 = k1 @ pauli  # exp(i pi/2 P) = i P
        abc.append(val)
    return k1, tuple(abc), k2


def _zz_core(c: float) -> list[Gate]:
    """Gates for exp(i c ZZ) on qubits (0, 1)."""
    if abs(c) < ANGLE_ATOL:
        return []
    if abs(abs(c) - math.pi / 4) < 1e-10:
        lam = -2 * c
        return [Gate("CZ", (0, 1)), Gate("RZ", (0,), (lam,)), Gate("RZ", (1,), (lam,))]
    h = Gate("U2x2", (1,), matrix=H)
    return [h, Gate("CZ", (0, 1)), h, Gate("RZ", (1,), (-2 * c,)), h, Gate("CZ", (0, 1)), h]


def _canonical_core(a: float, b: float, c: float) -> list[Gate]:
    """3-CZ circuit for exp(i(a XX + b YY + c ZZ)) on qubits (0, 1)."""
    hb = Gate("U2x2", (1,), matrix=H)
    ha = Gate("U2x2", (0,), matrix=H)
    pi2 = math.pi / 2
    cnot10 = [ha, Gate("CZ", (0, 1)), ha]
    cnot01 = [hb, Gate("CZ", (0, 1)), hb]
    return [
        Gate("RZ", (1,), (pi2,)),
        *cnot10,
        Gate("RZ", (0,), (-2 * c + pi2,)),
        Gate("RY", (1,), (-2 * a + pi2,)),
        *cnot01,
        Gate("RY", (1,), (2 * b - pi2,)),
        *cnot10,
        Gate("RZ", (0,), (-pi2,)),
    ]


def _local_gates(m: np.ndarray) -> list[Gate]:
    f = kron_factor(m)
    if f is None:
        raise TranspileError("expected a local two-qubit operator")
    return [Gate("U2x2", (0,), matrix=_unitarize(f[0])), Gate("U2x2", (1,), matrix=_unitarize(f[1]))]


def _unitarize(m: np.ndarray) -> np.ndarray:
    from scipy.linalg import polar
    return polar(m)[0]


_G_Y = S @ H  # maps Z to Y under conjugation


def decompose_2q(u, atol: float = 1e-10) -> Circuit:
    """Two-qubit fragment over {R, RZ, CZ} with at most 3 CZ, equal to u up to phase.

    Controlled-unitaries and other single-interaction gates take a 0/1/2-CZ
    path; everything else uses the 3-CZ canonical circuit.
    """
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4) or not is_unitary(u, atol):
        raise TranspileError("decompose_2q needs a 4x4 unitary")
    ov = np.trace(CZ @ u) / 4
    if abs(abs(ov) - 1) < 1e-12:
        return Circuit(2, [Gate("CZ", (0, 1))])
    local = kron_factor(u / np.linalg.det(u) ** 0.25)
    if local is not None:
        gates = _local_gates(u)
    else:
        k1, (a, b, c), k2 = kak(u)
        nz = [abs(x) > 1e-10 for x in (a, b, c)]
        if sum(nz) <= 1:
            if nz[0]:
                basis, val = np.kron(H, H), a
            elif nz[1]:
                basis, val = np.kron(_G_Y, _G_Y), b
            else:
                basis, val = np.eye(4), c
            # exp(i v P) = B exp(i v ZZ) B^dag with B Z B^dag = P
            k2 = basis.conj().T @ k2
            k1 = k1 @ basis
            core = _zz_core(val)
        else:
            core = _canonical_core(a, b, c)
        gates = _local_gates(k2) + core + _local_gates(k1)
    frag, frames = absorb_virtual_z(Circuit(2, gates))
    for q, lam in sorted(frames.items()):
        frag.append(Gate("RZ", (q,), (lam,)))
    return frag


# ---------------------------------------------------------------------------
# routing and the full pipeline
# ---------------------------------------------------------------------------

def _swap_gates(p: int, q: int) -> list[Gate]:
    return [Gate("CNOT", (p, q)), Gate("CNOT", (q, p)), Gate("CNOT", (p, q))]


def route(circuit: Circuit, topology: Topology, initial_layout: Sequence[int] | None = None) -> Circuit:
    """Insert SWAPs (as 3 CNOTs) so every two-qubit gate acts on a topology edge.

    The result lives on ``topology.num_qubits`` physical wires.  Its metadata
    records ``initial_layout``, ``final_layout`` and ``swaps``.
    """
    n, N = circuit.num_qubits, topology.num_qubits
    if n > N:
        raise TranspileError(f"circuit needs {n} qubits, topology has {N}")
    if any(g.is_unitary_op and len(g.qubits) > 2 for g in circuit.gates):
        raise TranspileError("only one- and two-qubit gates can be routed")
    l2p = list(initial_layout) if initial_layout is not None else list(range(N))
    if len(l2p) < N:  # extend a partial layout with the unused physical qubits
        l2p += [q for q in range(N) if q not in l2p]
    if sorted(l2p) != list(range(N)):
        raise TranspileError(f"layout {l2p} is not a permutation of {N} physical qubits")
    start = list(l2p)
    p2l = {p: lq for lq, p in enumerate(l2p)}
    out: list[Gate] = []
    swaps = 0
    for g in circuit.gates:
        if g.is_unitary_op and len(g.qubits) == 2:
            pa, pb = l2p[g.qubits[0]], l2p[g.qubits[1]]
            if not topology.has_edge(pa, pb):
                path = topology.shortest_path(pa, pb)
                for nxt in path[1:-1]:
                    cur = l2p[g.qubits[0]]
                    out.extend(_swap_gates(cur, nxt))
                    swaps += 1
                    la, lb = p2l[cur], p2l[nxt]
                    l2p[la], l2p[lb] = nxt, cur
                    p2l[cur], p2l[nxt] = lb, la
        out.append(g.remap(l2p))
    md = dict(circuit.metadata)
    md.update(initial_layout=start[:n], final_layout=l2p[:n], swaps=swaps,
              initial_layout_full=start, final_layout_full=list(l2p))
    return Circuit(N, out, md)


def _degree_layout(circuit: Circuit, topology: Topology) -> list[int]:
    """Put the logical qubit with the most two-qubit partners on the best-connected site."""
    n, N = circuit.num_qubits, topology.num_qubits
    weight = [0] * n
    for g in circuit.gates:
        if g.is_unitary_op and len(g.qubits) == 2:
            for q in g.qubits:
                weight[q] += 1
    logical = sorted(range(n), key=lambda q: (-weight[q], q))
    physical = sorted(range(N), key=lambda p: (-topology.degree(p), p))
    layout = [0] * n
    for lq, p in zip(logical, physical):
        layout[lq] = p
    return layout


def lower_to_native(circuit: Circuit) -> Circuit:
    """Replace every gate by R/RZ/CZ equivalents (qubit positions unchanged)."""
    out: list[Gate] = []
    for g in circuit.gates:
        if g.kind in ("R", "RZ", "CZ", "Measure", "Barrier"):
            out.append(g)
        elif len(g.qubits) == 1:
            out.extend(decompose_1q(g.to_matrix(), g.qubits[0]))
        elif g.kind == "CNOT":
            c, t = g.qubits
            out.extend(decompose_1q(H, t) + [Gate("CZ", (c, t))] + decompose_1q(H, t))
        else:
            frag = decompose_2q(g.to_matrix())
            out.extend(x.remap(g.qubits) for x in frag.gates)
    return Circuit(circuit.num_qubits, out, dict(circuit.metadata))


def transpile(circuit: Circuit, topology: Topology | None = None,
              initial_layout: Sequence[int] | None = None) -> NativeCircuit:
    """route -> decompose -> virtual-Z absorption -> merge."""
    topology = topology or DEFAULT_TOPOLOGY
    if circuit.num_qubits > topology.num_qubits:
        raise TranspileError(f"circuit needs {circuit.num_qubits} qubits, topology has {topology.num_qubits}")
    if initial_layout is not None:
        routed = route(circuit, topology, initial_layout)
    else:
        candidates = [route(circuit, topology, None), route(circuit, topology, _degree_layout(circuit, topology))]
        routed = min(candidates, key=lambda c: c.metadata["swaps"])
    md = routed.metadata
    native, frames = absorb_virtual_z(lower_to_native(routed))
    for key in ("initial_layout", "final_layout", "swaps", "initial_layout_full", "final_layout_full"):
        native.metadata.pop(key, None)
    return NativeCircuit(
        circuit=native,
        initial_layout=list(md["initial_layout_full"]),
        final_layout=list(md["final_layout_full"]),
        frames=frames,
        swaps=md["swaps"],
        num_logical=circuit.num_qubits,
    )


def native_gate_counts(circuits: Iterable[Circuit]) -> dict[str, int]:
    counts: dict[str, int] = {}
    for c in circuits:
        for g in c.gates:
            counts[g.kind] = counts.get(g.kind, 0) + 1
    return counts
