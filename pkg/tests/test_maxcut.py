import math

import numpy as np
import pytest

from deskqc.backend import Backend
from deskqc.maxcut import (Graph, brute_force_maxcut, cut_value, ising_from_graph, optimize_qaoa, qaoa_circuit,
                           qscore_run, reduce_virtual_node)
from deskqc.sim import run_statevector
from deskqc.transpiler import Topology, transpile

# user-supplied six-node instance; node 6 is the virtual node (1-based labels)
SIX_NODE_EDGES = """
1 4
1 5
1 6
2 4
2 5
2 6
3 4
3 5
1 2
4 5
"""


def spins(bits):
    return np.array([1 - 2 * int(b) for b in bits])


def test_graph_invariants():
    with pytest.raises(ValueError):
        Graph(3, frozenset({(0, 0)}))
    with pytest.raises(ValueError):
        Graph(2, frozenset({(0, 2)}))
    g = Graph.from_edge_list(SIX_NODE_EDGES)
    assert g.n == 6 and g.num_edges == 10
    assert Graph.from_edge_list(g.to_edge_list()) == g


def test_brute_force_examples():
    assert brute_force_maxcut(Graph.complete(2))[0] == 1
    assert brute_force_maxcut(Graph.complete(4))[0] == 4
    assert brute_force_maxcut(Graph.cycle(5))[0] == 4
    with pytest.raises(ValueError):
        brute_force_maxcut(Graph(25, frozenset()))


def test_cut_value_examples():
    assert cut_value(Graph.complete(4), "0000") == 0
    assert cut_value(Graph.complete(2), "01") == 1
    with pytest.raises(ValueError):
        cut_value(Graph.complete(2), "0")


def test_supplied_six_node_instance_has_eight_cuts():
    g = Graph.from_edge_list(SIX_NODE_EDGES)
    assert cut_value(g, "00011" + "1") == 8
    best, argmax = brute_force_maxcut(g)
    assert best == 8 and "000111" in argmax
    assert reduce_virtual_node(g).num_spins == 5


def test_virtual_node_examples():
    p = reduce_virtual_node(Graph.complete(2))
    assert p.num_spins == 1 and p.h.tolist() == [-1.0]
    star = Graph(5, frozenset((i, 4) for i in range(4)))
    p = reduce_virtual_node(star)
    assert p.h.tolist() == [-1.0] * 4 and not p.J.any()
    with pytest.raises(ValueError):
        reduce_virtual_node(Graph(1, frozenset()))


def test_energy_cut_duality(rng):
    for n in range(2, 11):
        g = Graph.erdos_renyi(n, 0.5, rng)
        ising = ising_from_graph(g)
        energies = ising.energies()
        for idx in rng.choice(2**n, size=min(2**n, 64), replace=False):
            bits = format(int(idx), f"0{n}b")
            z = spins(bits)
            assert cut_value(g, bits) == (g.num_edges - sum(z[a] * z[b] for a, b in g.edges)) / 2
            assert energies[idx] == pytest.approx(ising.energy(z))
        best = brute_force_maxcut(g)[0]
        assert (g.num_edges - energies.min()) / 2 == best


def test_virtual_node_soundness(rng):
    for _ in range(50):
        n = int(rng.integers(2, 11))
        g = Graph.erdos_renyi(n, 0.5, rng)
        full = ising_from_graph(g).energies()
        # last node in state |1> means spin -1: the odd indices
        restricted = full[1::2].min()
        assert reduce_virtual_node(g).energies().min() == pytest.approx(restricted)
        assert restricted == pytest.approx(full.min())


def test_qaoa_zero_angles_uniform():
    prob = reduce_virtual_node(Graph.complete(4))
    psi = run_statevector(qaoa_circuit(prob, 0.0, 0.0, measure=False)).data
    assert np.allclose(np.abs(psi) ** 2, 1 / 8)


def test_qaoa_single_spin_closed_form():
    # H' = -Z: |+> -> RZ(-2g) puts the Bloch vector at azimuth -2g; RX(2b) tilts it, <Z> = -sin(2g) sin(2b)
    prob = reduce_virtual_node(Graph.complete(2))
    for g, b in [(0.3, 0.2), (1.1, 0.7), (2.0, 1.3)]:
        psi = run_statevector(qaoa_circuit(prob, g, b, measure=False)).data
        z = abs(psi[0]) ** 2 - abs(psi[1]) ** 2
        assert z == pytest.approx(-math.sin(2 * g) * math.sin(2 * b), abs=1e-12)


def test_qaoa_transpiles_on_star(rng):
    g = Graph.erdos_renyi(6, 0.5, rng)
    nc = transpile(qaoa_circuit(reduce_virtual_node(g), 0.4, 0.3))
    nc.check(Topology.star())


def test_single_spin_optimum_concentrates():
    res = optimize_qaoa(Graph.complete(2), 2000, rng_seed=1)
    assert res.counts.frequency("0") >= 0.9


def test_triangle_most_probable_is_optimal():
    g = Graph.complete(3)
    res = optimize_qaoa(g, 2000, rng_seed=2)
    top = max(res.counts, key=res.counts.get)
    assert cut_value(g, top + "1") == 2
    assert res.evaluations <= 16 * 16 + 100 + 5


def test_optimize_rejects_bad_input():
    with pytest.raises(ValueError):
        optimize_qaoa(Graph.complete(3), 0)
    with pytest.raises(ValueError):
        optimize_qaoa(Graph.complete(8), 10)


def test_default_demo_shots():
    import inspect
    assert inspect.signature(optimize_qaoa).parameters["shots_per_step"].default == 10_000


def test_exact_expected_cut_invariant_under_relabelling(rng):
    be = Backend()
    for _ in range(5):
        g = Graph.erdos_renyi(5, 0.5, rng)
        perm = list(rng.permutation(4)) + [4]  # keep the virtual node
        vals = []
        for h in (g, g.relabel(perm)):
            prob = reduce_virtual_node(h)
            p = be.probabilities(qaoa_circuit(prob, 0.7, 0.4))
            table = np.array([cut_value(h, format(i, "04b") + "1") for i in range(16)])
            vals.append(table @ p)
        assert vals[0] == pytest.approx(vals[1], abs=1e-12)


def test_qscore_baselines():
    rep = qscore_run((3, 5), 40, 512, policy="perfect", rng_seed=3)
    assert all(rep.beta[n] == pytest.approx(1.0) for n in (3, 5))
    rnd = qscore_run((4, 5, 6), 100, 2048, policy="random", rng_seed=4)
    assert all(abs(rnd.beta[n]) < 0.05 for n in (4, 5, 6))
    assert not any(rnd.passed.values())


def test_qscore_size_limit_and_report():
    with pytest.raises(ValueError):
        qscore_run((7,), 1)
    rep = qscore_run((4,), 5, 256, rng_seed=5)
    d = rep.to_dict()
    assert d["points"][0]["n"] == 4 and 0.2 < d["points"][0]["beta"] <= 1.0
