import math

import numpy as np
import pytest

from deskqc.backend import Backend
from deskqc.noise import readout_only
from deskqc.observables import Observable, estimate_observable
from deskqc.sim import run_statevector
from deskqc.vqe import (NUM_PARAMS, AimParams, AnsatzState, ansatz_circuit, build_aim_qubit_hamiltonian, energy,
                        exact_ground_energy, fermionic_matrix, parameter_shift_gradient, vqe_optimize)

REFERENCE = AimParams.reference_setting()
# 16x16 eigensolver value for the reference Hamiltonian at the reference setting (mu = 0)
REFERENCE_EXACT = -4.094855934


def test_params_must_be_finite():
    with pytest.raises(ValueError):
        AimParams(U=float("inf"))


def test_zero_parameters_give_zero_observable():
    obs = build_aim_qubit_hamiltonian(AimParams(0, 0, 0, 0, 0))
    assert obs.is_zero()
    assert exact_ground_energy(AimParams(0, 0, 0, 0, 0)) == 0


def test_reference_setting_coefficients():
    obs = build_aim_qubit_hamiltonian(REFERENCE)
    nonzero = {str(p): c for c, p in obs.simplify(drop_zeros=True).terms}
    assert nonzero == {"ZIII": -2.0, "IIZI": -2.0, "ZIZI": 0.5, "XXII": 0.5, "YYII": 0.5, "IIXX": 0.5, "IIYY": 0.5}


def test_fermionic_convention_matches_jw_matrix(rng):
    for _ in range(10):
        p = AimParams(*rng.normal(size=5))
        h = build_aim_qubit_hamiltonian(p, "fermionic").matrix()
        assert np.abs(h - fermionic_matrix(p)).max() < 1e-12
        assert np.abs(h - h.conj().T).max() < 1e-12


def test_reference_convention_differs_by_known_terms(rng):
    # reference = fermionic - (mu + U/4) - (3U/4)(Z0 + Z2)
    p = AimParams(*rng.normal(size=5))
    diff = build_aim_qubit_hamiltonian(p).matrix() - fermionic_matrix(p)
    corr = Observable([(-(p.mu + p.U / 4), "IIII"), (-0.75 * p.U, "ZIII"), (-0.75 * p.U, "IIZI")]).matrix()
    assert np.abs(diff - corr).max() < 1e-12


def test_pinned_exact_energy():
    assert exact_ground_energy(REFERENCE) == pytest.approx(REFERENCE_EXACT, abs=1e-8)


def test_quadratic_model_single_particle():
    p = AimParams(eps_d=0.3, eps_1=-0.2, mu=0.0, U=0.0, V1=1.0)
    sp = np.linalg.eigvalsh([[p.eps_d - p.mu, p.V1], [p.V1, p.eps_1]])
    expected = 2 * sp[sp < 0].sum()
    assert exact_ground_energy(p, "fermionic") == pytest.approx(expected, abs=1e-12)
    assert exact_ground_energy(p) == pytest.approx(expected, abs=1e-12)


def test_ansatz_examples():
    assert np.allclose(np.abs(run_statevector(ansatz_circuit(np.zeros(7))).data), np.eye(16)[0])
    psi = run_statevector(ansatz_circuit([math.pi] + [0] * 6)).data
    assert abs(psi[0b1000]) == pytest.approx(1)
    with pytest.raises(ValueError):
        ansatz_circuit(np.zeros(6))
    with pytest.raises(ValueError):
        AnsatzState(np.zeros(8))
    c = ansatz_circuit(np.ones(7))
    assert sum(g.kind == "CZ" for g in c.gates) == 3
    assert c.metadata["entanglers"] == [[0, 1], [0, 2], [0, 3]]


def test_ansatz_reaches_below_minus_one(rng):
    ham = build_aim_qubit_hamiltonian(REFERENCE)
    best = min(energy(th, ham, None).value for th in rng.uniform(0, 2 * math.pi, (2000, 7)))
    assert best < -1


def test_energy_at_zero_closed_form():
    # |0000>: every Z is +1, XX/YY vanish: const + 2 zd + 2 zb + U/4
    ham = build_aim_qubit_hamiltonian(REFERENCE)
    assert energy(np.zeros(7), ham, None).value == pytest.approx(-2 - 2 + 0.5)


def test_sampled_energy_within_shot_noise(rng):
    ham = build_aim_qubit_hamiltonian(REFERENCE)
    for k in range(5):
        th = rng.uniform(0, 2 * math.pi, 7)
        est = energy(th, ham, 5000, rng_seed=k)
        assert abs(est.value - energy(th, ham, None).value) <= 4 * est.stderr
        assert est.value >= REFERENCE_EXACT - 4 * est.stderr


def test_default_shots():
    import inspect
    assert inspect.signature(energy).parameters["shots"].default == 5000


def test_grouped_equals_termwise(rng):
    ham = build_aim_qubit_hamiltonian(REFERENCE)
    th = rng.uniform(0, 2 * math.pi, 7)
    psi = run_statevector(ansatz_circuit(th))
    termwise = sum(c * Observable([(1.0, p)]).expectation(psi) for c, p in ham.terms)
    grouped = estimate_observable(ansatz_circuit(th), ham, None, Backend(transpile=True)).value
    assert grouped == pytest.approx(termwise, abs=1e-9)


def test_gradient_matches_finite_differences(rng):
    ham = build_aim_qubit_hamiltonian(REFERENCE)
    for _ in range(3):
        th = rng.uniform(0, 2 * math.pi, 7)
        g, err = parameter_shift_gradient(th, ham, None)
        assert np.all(err == 0)
        fd = np.zeros(7)
        h = 1e-4
        for i in range(7):
            e = np.zeros(7)
            e[i] = h
            fd[i] = (energy(th + e, ham, None).value - energy(th - e, ham, None).value) / (2 * h)
        assert np.abs(g - fd).max() < 1e-6
        g2, _ = parameter_shift_gradient(th, ham * 2.5, None)
        assert np.allclose(g2, 2.5 * g)


def test_gradient_zero_at_stationary_point():
    ham = Observable([(1.0, "ZIII"), (0.5, "IIZZ")])
    g, err = parameter_shift_gradient(np.zeros(7), ham, 5000, rng_seed=1)
    assert np.all(np.abs(g) <= 4 * err + 1e-12)


def test_exact_optimization_converges():
    tr = vqe_optimize(REFERENCE, shots=None, rng_seed=1)
    assert tr.converged and tr.final.grad_norm < 1e-3
    assert len(tr.iterations) <= 201
    assert tr.final.energy >= REFERENCE_EXACT - 1e-9
    assert tr.final.energy == pytest.approx(-3.8806713, abs=1e-3)
    d = tr.to_dict()
    assert d["exact_energy"] == pytest.approx(REFERENCE_EXACT) and d["iterations"]


def test_shot_optimization_lands_near_optimum():
    tr = vqe_optimize(REFERENCE, shots=5000, rng_seed=2)
    assert abs(tr.final.energy - (-3.8806713)) < 3 * math.hypot(tr.final.stderr, 0.0) + 1e-12


@pytest.mark.slow
def test_rem_brings_trace_closer():
    be = Backend(readout_only(0.05))
    on, off = [], []
    for s in range(3):
        on.append(vqe_optimize(REFERENCE, 5000, 40, be, s, rem=True).final.energy)
        off.append(vqe_optimize(REFERENCE, 5000, 40, be, s, rem=False).final.energy)
    assert np.mean(np.abs(np.array(on) - REFERENCE_EXACT)) < np.mean(np.abs(np.array(off) - REFERENCE_EXACT))
    assert NUM_PARAMS == 7
