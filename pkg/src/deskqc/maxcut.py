"""Maxcut with single-layer QAOA and the Q-score benchmark.

Nodes are 0-based internally (graph files use 1-based labels).  The last
node is the virtual node: it is pinned to |1> (spin -1), which removes one
qubit.  Spin z = +1 corresponds to bit 0.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .backend import Backend
from .circuit import Circuit
from .sim import Counts, as_rng, derive_seeds

log = logging.getLogger(__name__)

MAX_BRUTE_FORCE_NODES = 24


@dataclass(frozen=True)
class Graph:
    n: int
    edges: frozenset

    def __post_init__(self):
        edges = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ValueError("self-loops are not allowed")
            if not (0 <= a < self.n and 0 <= b < self.n):
                raise ValueError(f"edge {(a, b)} out of range for {self.n} nodes")
            edges.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(edges))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def relabel(self, perm: Sequence[int]) -> "Graph":
        return Graph(self.n, frozenset((perm[a], perm[b]) for a, b in self.edges))

    @classmethod
    def complete(cls, n: int) -> "Graph":
        return cls(n, frozenset(itertools.combinations(range(n), 2)))

    @classmethod
    def cycle(cls, n: int) -> "Graph":
        return cls(n, frozenset((i, (i + 1) % n) for i in range(n)))

    @classmethod
    def erdos_renyi(cls, n: int, p: float = 0.5, rng_seed=None) -> "Graph":
        """G(n, p), redrawn until at least one edge exists."""
        rng = as_rng(rng_seed)
        pairs = list(itertools.combinations(range(n), 2))
        while True:
            keep = rng.random(len(pairs)) < p
            if keep.any():
                return cls(n, frozenset(e for e, k in zip(pairs, keep) if k))

    @classmethod
    def from_edge_list(cls, text: str, n: int | None = None) -> "Graph":
        """One 1-based pair per line; '#' starts a comment."""
        edges = []
        for line in text.splitlines():
            line = line.split("#")[0].strip()
            if not line:
                continue
            a, b = (int(x) for x in line.replace(",", " ").split())
            edges.append((a - 1, b - 1))
        n = n or max(max(e) for e in edges) + 1
        return cls(n, frozenset(edges))

    @classmethod
    def load(cls, path: str | Path, n: int | None = None) -> "Graph":
        return cls.from_edge_list(Path(path).read_text(), n)

    def to_edge_list(self) -> str:
        return "".join(f"{a + 1} {b + 1}\n" for a, b in sorted(self.edges))


@dataclass
class IsingProblem:
    """H = sum_{i<j} J_ij Z_i Z_j + sum_i h_i Z_i."""

    J: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        self.J = np.asarray(self.J, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        m = self.h.size
        if self.J.shape != (m, m) or np.abs(self.J - self.J.T).max() > 0 or np.any(np.diag(self.J)):
            raise ValueError("J must be symmetric with zero diagonal and match h")

    @property
    def num_spins(self) -> int:
        return self.h.size

    def energy(self, spins) -> float:
        z = np.asarray(spins, dtype=float)
        return float(0.5 * z @ self.J @ z + self.h @ z)

    def energies(self) -> np.ndarray:
        """Energy of every basis state (bit 0 -> spin +1), big-endian index."""
        m = self.num_spins
        idx = np.arange(2**m)
        z = 1 - 2 * ((idx[:, None] >> (m - 1 - np.arange(m))) & 1)
        return 0.5 * np.einsum("ki,ij,kj->k", z, self.J, z) + z @ self.h


def ising_from_graph(g: Graph) -> IsingProblem:
    J = np.zeros((g.n, g.n))
    for a, b in g.edges:
        J[a, b] = J[b, a] = 1.0
    return IsingProblem(J, np.zeros(g.n))


def reduce_virtual_node(g: Graph) -> IsingProblem:
    """Fix the last node to spin -1: H' = sum_{i<j<n} J_ij Z_i Z_j - sum_i J_{i,n} Z_i."""
    if g.n < 2:
        raise ValueError("need at least two nodes")
    m = g.n - 1
    J = np.zeros((m, m))
    h = np.zeros(m)
    for a, b in g.edges:
        if b == m:
            h[a] -= 1.0
        else:
            J[a, b] = J[b, a] = 1.0
    return IsingProblem(J, h)


def qaoa_circuit(problem: IsingProblem, gamma: float, beta: float, measure: bool = True) -> Circuit:
    """|+>^m, exp(-i gamma H'), exp(-i beta sum X)."""
    m = problem.num_spins
    c = Circuit(m)
    for q in range(m):
        c.h(q)
    for i in range(m):
        for j in range(i + 1, m):
            if problem.J[i, j]:
                c.cnot(i, j)
                c.rz(2 * gamma * problem.J[i, j], j)
                c.cnot(i, j)
    for i in range(m):
        if problem.h[i]:
            c.rz(2 * gamma * problem.h[i], i)
    for q in range(m):
        c.r(2 * beta, 0.0, q)
    if measure:
        c.measure_all()
    return c


def cut_value(g: Graph, assignment: str) -> int:
    if len(assignment) != g.n:
        raise ValueError(f"assignment has {len(assignment)} bits, graph has {g.n} nodes")
    return sum(assignment[a] != assignment[b] for a, b in g.edges)


def _cut_table(g: Graph) -> np.ndarray:
    """Cut of every (n-1)-bit string with the virtual node appended as '1'."""
    m = g.n - 1
    idx = np.arange(2**m)
    bits = np.concatenate([(idx[:, None] >> (m - 1 - np.arange(m))) & 1, np.ones((idx.size, 1), int)], axis=1)
    cuts = np.zeros(idx.size, dtype=int)
    for a, b in g.edges:
        cuts += bits[:, a] != bits[:, b]
    return cuts


def brute_force_maxcut(g: Graph) -> tuple[int, list[str]]:
    """Exact maximum over the 2^(n-1) assignments with the last node fixed to 1."""
    if g.n > MAX_BRUTE_FORCE_NODES:
        raise ValueError(f"brute force is limited to {MAX_BRUTE_FORCE_NODES} nodes")
    if g.n == 1:
        return 0, ["1"]
    cuts = _cut_table(g)
    best = int(cuts.max())
    m = g.n - 1
    return best, [format(int(i), f"0{m}b") + "1" for i in np.nonzero(cuts == best)[0]]


def average_cut(g: Graph, counts: Counts) -> float:
    table = _cut_table(g)
    return float(table @ counts.to_array() / counts.shots)


@dataclass
class QaoaResult:
    gamma: float
    beta: float
    counts: Counts
    expected_cut: float
    evaluations: int
    history: list = field(default_factory=list)


def optimize_qaoa(g: Graph, shots_per_step: int = 10_000, backend: Backend | None = None, rng_seed=None,
                  grid: int = 16, max_evals: int = 100) -> QaoaResult:
    """Coarse grid over [0, pi) x [0, pi/2), then Nelder-Mead on the sampled mean cut."""
    if shots_per_step < 1:
        raise ValueError("shots_per_step must be >= 1")
    backend = backend or Backend()
    if g.n - 1 > backend.topology.num_qubits:
        raise ValueError(f"{g.n} nodes need {g.n - 1} qubits; the device has {backend.topology.num_qubits}")
    problem = reduce_virtual_node(g)
    table = _cut_table(g)
    rng = as_rng(rng_seed)
    history = []

    def cost(x) -> float:
        gamma, beta = x
        counts = backend.run(qaoa_circuit(problem, gamma, beta), shots_per_step, rng)
        val = -float(table @ counts.to_array()) / counts.shots
        history.append((float(gamma), float(beta), -val))
        return val

    gammas = np.arange(grid) * math.pi / grid
    betas = np.arange(grid) * (math.pi / 2) / grid
    best = min(((cost((ga, be)), ga, be) for ga in gammas for be in betas), key=lambda t: t[0])
    res = minimize(cost, x0=np.array(best[1:]), method="Nelder-Mead",
                   options={"maxfev": max_evals, "xatol": 1e-3, "fatol": 1e-4,
                            "initial_simplex": np.array([best[1:], [best[1] + math.pi / grid, best[2]],
                                                         [best[1], best[2] + math.pi / (2 * grid)]])})
    gamma, beta = (res.x if res.fun <= best[0] else np.array(best[1:]))
    counts = backend.run(qaoa_circuit(problem, gamma, beta), shots_per_step, rng)
    return QaoaResult(float(gamma), float(beta), counts, average_cut(g, counts), len(history), history)


# ---------------------------------------------------------------------------
# Q-score
# ---------------------------------------------------------------------------

@dataclass
class QScoreReport:
    sizes: list[int]
    beta: dict
    beta_stderr: dict
    instances: int
    shots_per_step: int
    passed: dict
    excluded: dict
    per_instance: dict = field(default_factory=dict)
    threshold: float = 0.2

    def to_dict(self) -> dict:
        return {
            "sizes": self.sizes, "instances": self.instances, "shots_per_step": self.shots_per_step,
            "threshold": self.threshold,
            "points": [{"n": n, "beta": self.beta[n], "stderr": self.beta_stderr[n], "passed": self.passed[n],
                        "excluded": self.excluded[n]} for n in self.sizes],
        }


def qscore_run(sizes: Sequence[int] = (3, 4, 5, 6), instances_per_size: int = 100, shots_per_step: int = 2048,
               edge_probability: float = 0.5, backend: Backend | None = None, rng_seed=None,
               policy: str = "qaoa", threshold: float = 0.2) -> QScoreReport:
    """beta(n) = mean over instances of (C_avg - |E|/2) / (C_best - |E|/2).

    ``policy`` is "qaoa" (optimize), "random" (gamma = beta = 0) or
    "perfect" (all shots on a brute-force optimum).
    """
    backend = backend or Backend()
    width = backend.topology.num_qubits
    if max(sizes) > width + 1:
        raise ValueError(f"sizes must be <= {width + 1} (device qubits plus the virtual node)")
    seeds = derive_seeds(rng_seed, len(sizes))
    beta, err, passed, excluded, per = {}, {}, {}, {}, {}
    for n, sseed in zip(sizes, seeds):
        vals = []
        skipped = 0
        for iseed in derive_seeds(sseed, instances_per_size):
            gseed, oseed = iseed.spawn(2)
            g = Graph.erdos_renyi(n, edge_probability, gseed)
            c_rand = g.num_edges / 2
            c_best, argmax = brute_force_maxcut(g)
            if c_best <= c_rand:
                skipped += 1
                log.info("excluding degenerate instance %s", sorted(g.edges))
                continue
            if policy == "qaoa":
                c_avg = optimize_qaoa(g, shots_per_step, backend, oseed).expected_cut
            elif policy == "random":
                counts = backend.run(qaoa_circuit(reduce_virtual_node(g), 0.0, 0.0), shots_per_step, oseed)
                c_avg = average_cut(g, counts)
            elif policy == "perfect":
                c_avg = float(c_best)
            else:
                raise ValueError(f"unknown policy {policy!r}")
            vals.append((c_avg - c_rand) / (c_best - c_rand))
        arr = np.array(vals)
        beta[n] = float(arr.mean()) if arr.size else float("nan")
        err[n] = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        passed[n] = bool(beta[n] > threshold)
        excluded[n] = skipped
        per[n] = vals
    return QScoreReport(list(sizes), beta, err, instances_per_size, shots_per_step, passed, excluded, per, threshold)
