import math

import numpy as np
import pytest

from deskqc.backend import Backend
from deskqc.bell import (CHSH_TERMS, GhzEntropies, chsh_scan, chsh_state_circuit, chsh_theory, compare_calibrations,
                         ghz5_circuit, ghz_entropies, ghz_fidelity, ghz_statevector, mermin_estimate,
                         mermin_monomials)
from deskqc.noise import bundled_profile, readout_only
from deskqc.observables import Observable, von_neumann_entropy
from deskqc.sim import run_statevector
from deskqc.transpiler import transpile


def exact_corr(theta, a, b):
    return Observable([(1.0, a + b)]).expectation(run_statevector(chsh_state_circuit(theta)))


def test_chsh_state_examples():
    assert np.allclose(run_statevector(chsh_state_circuit(0)).data, np.array([1, 0, 0, 1]) / math.sqrt(2))
    assert exact_corr(math.pi, "X", "X") == pytest.approx(-1)
    assert exact_corr(math.pi / 2, "X", "Z") == pytest.approx(1)


@pytest.mark.parametrize("theta", np.linspace(0, 2 * math.pi, 9))
def test_chsh_combination_matches_closed_form(theta):
    s = sum(sign * exact_corr(theta, a, b) for a, b, sign in CHSH_TERMS.values())
    assert s == pytest.approx(chsh_theory(theta), abs=1e-12)
    assert abs(chsh_theory(theta)) <= 2 * math.sqrt(2) + 1e-12


def test_chsh_theta_zero_and_minimum():
    pts = chsh_scan([0.0, 3 * math.pi / 4], shots=100_000, rng_seed=1, resamples=200)
    assert abs(pts[0].estimate.value - 2.0) < 0.02
    assert abs(pts[1].estimate.value + 2 * math.sqrt(2)) < 0.03
    assert pts[1].violates and not pts[0].violates


def test_chsh_scan_shape_and_tolerance():
    pts = chsh_scan(shots=4000, rng_seed=2, resamples=200)
    assert len(pts) == 32
    for p in pts:
        assert abs(p.estimate.value - p.theory) < 4 * p.estimate.stderr + 1e-12
        d = p.to_dict()
        assert set(d) >= {"theta", "estimate", "stderr", "theory"}


def test_chsh_rejects_zero_shots():
    with pytest.raises(ValueError):
        chsh_scan([0.0], shots=0)


def test_chsh_rem_with_readout_noise():
    be = Backend(readout_only(0.05))
    pt = chsh_scan([3 * math.pi / 4], 20_000, rem=True, backend=be, rng_seed=3, resamples=200)[0]
    assert pt.raw is not None
    assert abs(pt.estimate.value - pt.theory) < abs(pt.raw.value - pt.theory)
    assert "REM" in pt.estimate.methods


def test_ghz_circuit_statevector():
    psi = run_statevector(ghz5_circuit()).data
    assert np.allclose(psi, ghz_statevector())
    assert abs(psi[0]) == pytest.approx(1 / math.sqrt(2))


def test_ghz_transpiles_onto_center():
    nc = transpile(ghz5_circuit())
    czs = [g.qubits for g in nc.circuit.gates if g.kind == "CZ"]
    assert len(czs) == 4 and all(2 in q for q in czs)
    assert nc.swaps == 0


def test_ghz_fidelity_noiseless_and_noisy():
    assert ghz_fidelity(None).value == pytest.approx(1.0, abs=1e-12)
    good = ghz_fidelity(None, Backend(bundled_profile("good"))).value
    bad = ghz_fidelity(None, Backend(bundled_profile("degraded"))).value
    assert 0 < bad < good < 1


def test_compare_calibrations_rows():
    rows = compare_calibrations([Backend(bundled_profile("good")), Backend(bundled_profile("degraded"))], None)
    assert len(rows) == 2
    assert rows[0]["fidelity"] > rows[1]["fidelity"]


def test_mermin_monomials_structure():
    monos = mermin_monomials(5)
    assert len(monos) == 16
    assert sum(s for s, _ in monos) == 1 - 10 + 5
    for s, p in monos:
        exact = Observable([(1.0, p)]).expectation(run_statevector(ghz5_circuit()))
        assert s * exact == pytest.approx(1.0)


def test_mermin_noiseless():
    rep = mermin_estimate(10_000, rng_seed=4, resamples=200)
    assert abs(rep.aggregate.value - 16) < 0.3
    assert rep.violates_classical
    yy = [e.value for (s, p), e in zip(rep.monomials, rep.estimates) if p.count("Y") == 2]
    assert len(yy) == 10 and max(yy) - min(yy) < 0.1


def test_mermin_rem_moves_toward_16():
    be = Backend(readout_only(0.03))
    rep = mermin_estimate(5000, rem=True, backend=be, rng_seed=5, resamples=200, cal_shots=5000)
    assert rep.raw_aggregate.value < 16
    assert abs(rep.aggregate.value - 16) < abs(rep.raw_aggregate.value - 16)
    assert "raw_aggregate" in rep.to_dict()


def test_entropy_upper_bounds_analytic():
    assert von_neumann_entropy(np.eye(32) / 32) == pytest.approx(GhzEntropies.UPPER_BOUNDS["full"])
    assert von_neumann_entropy(np.eye(4) / 4) == pytest.approx(GhzEntropies.UPPER_BOUNDS["rho_12"])
    assert von_neumann_entropy(np.eye(8) / 8) == pytest.approx(GhzEntropies.UPPER_BOUNDS["rho_345"])


@pytest.mark.slow
def test_ghz_entropies_noise_raises_entropy():
    clean = ghz_entropies(500, rng_seed=6, projection="mle")
    noisy = ghz_entropies(500, Backend(bundled_profile("degraded")), rng_seed=6, projection="mle")
    assert noisy.full > clean.full
    assert abs(clean.rho_12 - 1) < 0.1 and abs(clean.rho_345 - 1) < 0.1
