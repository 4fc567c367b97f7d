import math

import numpy as np
import pytest
from scipy.stats import unitary_group

from deskqc.backend import Backend
from deskqc.circuit import Circuit
from deskqc.observables import (Observable, PauliString, basis_change, estimate_observable, expectation_from_counts,
                                group_qubitwise, measurement_circuit, project_density, state_tomography,
                                von_neumann_entropy)
from deskqc.sim import QuantumState, partial_trace, sample_counts, state_fidelity
from deskqc.sim import run_statevector
from deskqc.vqe import AimParams, build_aim_qubit_hamiltonian
from tests.conftest import random_circuit


def ghz5():
    c = Circuit(5).h(0)
    for q in range(4):
        c.cnot(q, q + 1)
    return c


def test_basis_change_fragments():
    assert len(basis_change("ZZ")) == 0
    assert [g.kind for g in basis_change("Y").gates] == ["Sdg", "H"]


def test_x_on_plus_state():
    counts = Backend().run(measurement_circuit(Circuit(1).h(0), "X"), 1000, rng_seed=1)
    assert expectation_from_counts(counts, "X") == 1.0


def test_y_on_plus_i_state():
    prep = Circuit(1).h(0).s(0)
    counts = Backend().run(measurement_circuit(prep, "Y"), 1000, rng_seed=1)
    assert expectation_from_counts(counts, "Y") == 1.0


def test_expectation_from_counts_examples():
    from deskqc.sim import Counts
    assert expectation_from_counts(Counts({"0": 50}), "Z") == 1.0
    be = Backend()
    # |11111> has odd parity, so the five-fold Z correlator vanishes while pairs give +1
    assert abs(expectation_from_counts(be.run(measurement_circuit(ghz5(), "ZZZZZ"), 20_000, 2), "ZZZZZ")) < 0.03
    assert expectation_from_counts(be.run(measurement_circuit(ghz5(), "ZZZZZ"), 2000, 2), "ZZIII") == 1.0
    assert expectation_from_counts(be.run(measurement_circuit(ghz5(), "XXXXX"), 2000, 3), "XXXXX") == 1.0
    with pytest.raises(ValueError):
        expectation_from_counts(Counts({"00": 1}), "Z")


def test_grouping_examples():
    g = group_qubitwise(Observable([(1.0, "XXII"), (1.0, "IIXX")]))
    assert [s.label for s in g] == ["XXXX"]
    assert len(group_qubitwise(Observable([(1.0, "Z"), (1.0, "X")]))) == 2
    aim = group_qubitwise(build_aim_qubit_hamiltonian(AimParams.reference_setting()))
    assert sorted(s.label for s in aim) == ["XXXX", "YYYY", "ZZZZ"]


def test_grouping_assigns_every_term_once(rng):
    letters = "IXYZ"
    for _ in range(20):
        terms = [(1.0, "".join(rng.choice(list(letters), 4))) for _ in range(12)]
        obs = Observable(terms).simplify()
        groups = group_qubitwise(obs)
        assigned = sorted(i for s in groups for i in s.terms)
        assert assigned == list(range(len(obs)))
        for s in groups:
            for i in s.terms:
                p = obs.terms[i][1]
                assert all(a == "I" or a == b for a, b in zip(p.ops, s.label))


def test_observable_canonicalization():
    obs = Observable([(1.0, "XZ"), (2.0, "XZ"), (0.5, "II")]).simplify()
    assert obs.coefficient("XZ") == 3.0
    with pytest.raises(ValueError):
        Observable([(float("nan"), "X")])
    with pytest.raises(ValueError):
        PauliString("XQ")


def test_estimates_converge(rng):
    obs = Observable([(0.5, "ZZI"), (0.3, "XIX"), (-0.7, "IYY"), (0.2, "III")])
    shots = 4000
    ok = 0
    trials = 100
    for k in range(trials):
        prep = random_circuit(rng, 3, 20)
        exact = obs.expectation(run_statevector(prep))
        est = estimate_observable(prep, obs, shots, Backend(transpile=False), rng_seed=k)
        ok += abs(est.value - exact) <= 4 / math.sqrt(shots)
    assert ok >= 0.99 * trials


def test_exact_mode_matches_matrix():
    obs = build_aim_qubit_hamiltonian(AimParams.reference_setting())
    prep = Circuit(4).h(0).cnot(0, 1).ry(0.3, 2)
    est = estimate_observable(prep, obs, None)
    assert est.value == pytest.approx(obs.expectation(run_statevector(prep)), abs=1e-10)
    assert est.stderr == 0


def test_tomography_ground_state():
    res = state_tomography(Circuit(1), [0], 2000, rng_seed=1)
    assert abs(res.rho[0, 0] - 1) < 3 / math.sqrt(2000)
    assert len(res.settings_used) == 3


def test_tomography_bell_fidelity():
    res = state_tomography(Circuit(2).h(0).cnot(0, 1), [0, 1], 3500, rng_seed=2)
    bell = QuantumState.from_vector(np.array([1, 0, 0, 1]) / math.sqrt(2))
    assert state_fidelity(bell, res.state) > 0.99
    assert len(res.settings_used) == 9


def test_tomography_random_states(rng):
    shots = 2000
    for k in range(20):
        u = unitary_group.rvs(4, random_state=int(rng.integers(2**31)))
        prep = Circuit(2)
        prep.unitary(u, 0, 1)
        res = state_tomography(prep, [0, 1], shots, Backend(transpile=False), rng_seed=k)
        f = state_fidelity(QuantumState.from_vector(u[:, 0]), res.state)
        assert f >= 1 - 5 / math.sqrt(shots)


def test_tomography_ghz_pair():
    # tracing out the last three qubits leaves diag(1, 0, 0, 1) / 2
    res = state_tomography(ghz5(), [0, 1], 3500, rng_seed=3)
    red = QuantumState.from_density(np.diag([0.5, 0, 0, 0.5]))
    assert state_fidelity(red, res.state) > 0.99


def test_tomography_width_limit():
    with pytest.raises(ValueError):
        state_tomography(Circuit(6), list(range(6)), 10)


def test_projection_methods():
    m = np.diag([0.7, 0.4, -0.1])
    for method in ("nearest", "clip"):
        r = project_density(m, method)
        assert np.trace(r) == pytest.approx(1)
        assert np.linalg.eigvalsh(r).min() >= -1e-12
    assert np.allclose(project_density(m, "clip"), np.diag([0.7, 0.4, 0]) / 1.1)
    assert np.allclose(project_density(m, "nearest"), np.diag([0.65, 0.35, 0]))
    with pytest.raises(ValueError):
        project_density(m, "bogus")


def test_entropy_examples():
    ghz = np.zeros(32)
    ghz[[0, 31]] = 1 / math.sqrt(2)
    assert von_neumann_entropy(np.outer(ghz, ghz)) == pytest.approx(0, abs=1e-9)
    assert von_neumann_entropy(np.diag([0.5, 0, 0, 0.5])) == pytest.approx(1)
    assert von_neumann_entropy(np.eye(32) / 32) == pytest.approx(5)
    assert von_neumann_entropy(np.eye(4) / 4) == pytest.approx(2)
    assert von_neumann_entropy(np.eye(8) / 8) == pytest.approx(3)
    with pytest.raises(ValueError):
        von_neumann_entropy(np.array([[0.5, 0.5], [0, 0.5]]))


def test_entropy_bounds_random(rng):
    for n in (1, 2, 3):
        for _ in range(10):
            g = rng.normal(size=(2**n, 2**n)) + 1j * rng.normal(size=(2**n, 2**n))
            rho = g @ g.conj().T
            rho /= np.trace(rho)
            s = von_neumann_entropy(rho)
            assert -1e-12 <= s <= n + 1e-12


def test_complementary_entropies_equal(rng):
    for _ in range(10):
        psi = QuantumState.from_vector(unitary_group.rvs(32, random_state=int(rng.integers(2**31)))[:, 0])
        s12 = von_neumann_entropy(partial_trace(psi, [0, 1]))
        s345 = von_neumann_entropy(partial_trace(psi, [2, 3, 4]))
        assert abs(s12 - s345) < 1e-8
