import math

import numpy as np
import pytest

from deskqc.backend import Backend
from deskqc.circuit import Circuit
from deskqc.mitigation import (MitigatedValue, RemCalibration, RemConditioningError, apply_rem, bootstrap_stderr,
                               calibrate_rem, fold_global, pauli_twirl_cz, project_to_simplex, zne_extrapolate)
from deskqc.noise import NoiseProfile, readout_only, symmetric_confusion
from deskqc.sim import Counts, unitary_distance
from deskqc.transpiler import Topology, transpile
from tests.conftest import random_circuit


def bell_native():
    return transpile(Circuit(2).h(0).cnot(0, 1))


def test_noiseless_calibration_is_identity():
    cal = calibrate_rem(2, "correlated", 500, Backend(), rng_seed=1)
    assert np.allclose(cal.full_matrix(), np.eye(4))
    assert cal.shots_per_state == 500


def test_default_calibration_shots():
    import inspect
    assert inspect.signature(calibrate_rem).parameters["shots_per_state"].default == 10_000


def test_calibration_recovers_flip_rate():
    n = 10_000
    cal = calibrate_rem(1, "correlated", n, Backend(readout_only(0.1)), rng_seed=2)
    tol = 3 * math.sqrt(0.09 / n)
    assert np.abs(cal.full_matrix() - [[0.9, 0.1], [0.1, 0.9]]).max() < tol
    local = calibrate_rem(3, "local", n, Backend(readout_only(0.1)), rng_seed=3)
    for m in local.local:
        assert np.abs(m - [[0.9, 0.1], [0.1, 0.9]]).max() < tol


def test_calibration_rejects_zero_shots():
    with pytest.raises(ValueError):
        calibrate_rem(1, "correlated", 0)


def test_identity_rem_returns_frequencies():
    raw = Counts({"00": 30, "01": 10, "11": 60})
    assert np.allclose(apply_rem(raw, RemCalibration.identity(2)), raw.probabilities())


def test_forward_model_inversion(rng):
    for _ in range(10):
        confs = [symmetric_confusion(p) for p in rng.uniform(0.01, 0.15, 3)]
        cal = RemCalibration.from_confusions(confs, mode="correlated")
        p_true = rng.dirichlet(np.ones(8))
        f = cal.full_matrix() @ p_true
        assert np.abs(apply_rem(f, cal) - p_true).max() < 1e-6
        assert np.abs(apply_rem(f, RemCalibration.from_confusions(confs)) - p_true).max() < 1e-6


def test_rem_output_is_simplex_point(rng):
    cal = RemCalibration.from_confusions([symmetric_confusion(0.2)] * 2, mode="correlated")
    p = apply_rem(Counts({"00": 5, "11": 1}), cal)
    assert p.min() >= 0 and p.sum() == pytest.approx(1)


def test_ill_conditioned_calibration():
    cal = RemCalibration("correlated", matrix=np.array([[0.5, 0.5], [0.5, 0.5]]))
    with pytest.raises(RemConditioningError):
        apply_rem(np.array([0.5, 0.5]), cal)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        apply_rem(Counts({"0": 1}), RemCalibration.identity(2))


def test_calibration_invariants():
    with pytest.raises(ValueError):
        RemCalibration("correlated", matrix=np.array([[0.9, 0.0], [0.2, 1.0]]))


def test_simplex_projection():
    assert np.allclose(project_to_simplex([0.5, 0.5]), [0.5, 0.5])
    q = project_to_simplex([1.2, -0.1, -0.1])
    assert np.allclose(q, [1, 0, 0])


def test_rem_improves_ghz_distribution():
    ghz = Circuit(5).h(2)
    for q in (0, 1, 3, 4):
        ghz.cnot(2, q)
    ghz.measure_all()
    be = Backend(readout_only(0.04))
    raw = be.run(ghz, 20_000, rng_seed=5)
    cal = calibrate_rem(5, "correlated", 10_000, be, rng_seed=6, qubits=be.measured_physical(ghz))
    ideal = np.zeros(32)
    ideal[[0, 31]] = 0.5
    tv_raw = 0.5 * np.abs(raw.probabilities() - ideal).sum()
    tv_rem = 0.5 * np.abs(apply_rem(raw, cal) - ideal).sum()
    assert tv_rem < tv_raw


def test_twirl_without_cz_gives_copies():
    nc = transpile(Circuit(1).h(0))
    variants = pauli_twirl_cz(nc, 4, rng_seed=1)
    assert len(variants) == 4
    assert all(v.circuit.gates == nc.circuit.gates for v in variants)


def test_twirl_preserves_ideal_unitary(rng):
    for _ in range(5):
        nc = transpile(random_circuit(rng, 3, 15))
        ref = nc.with_frames().to_unitary()
        for v in pauli_twirl_cz(nc, 10, rng_seed=rng):
            assert unitary_distance(v.with_frames().to_unitary(), ref) < 1e-9
            v.check()


def test_twirl_distribution_matches_noiselessly():
    nc = bell_native()
    nc.circuit.measure_all()
    be = Backend()
    ref = be.probabilities(nc.with_frames())
    for v in pauli_twirl_cz(nc, 5, rng_seed=2):
        assert np.allclose(be.probabilities(v.with_frames()), ref, atol=1e-12)


def test_fold_scales():
    nc = bell_native()
    base = len(nc.circuit)
    assert fold_global(nc, 1).circuit.gates == nc.circuit.gates
    for s in (3, 5):
        f = fold_global(nc, s)
        assert len(f.circuit) == s * base
        assert unitary_distance(f.with_frames().to_unitary(), nc.with_frames().to_unitary()) < 1e-9
    with pytest.raises(ValueError):
        fold_global(nc, 2)


def test_folding_reduces_fidelity_under_depolarizing():
    from deskqc.sim import QuantumState, run_density, state_fidelity
    nc = transpile(Circuit(2).h(0).cnot(0, 1), Topology.line(2), [0, 1])
    prof = NoiseProfile(p1=0.01, p2=0.05)
    ideal = QuantumState.from_vector(np.array([1, 0, 0, 1]) / math.sqrt(2))
    fids = []
    for s in (1, 3, 5):
        c = fold_global(nc, s).with_frames()
        rho = run_density(Circuit(2, c.gates), prof)
        fids.append(state_fidelity(ideal, rho))
    assert fids[0] > fids[1] > fids[2]


def test_zne_constant_and_decay():
    v = zne_extrapolate([(1, 0.7, 0.01), (3, 0.7, 0.01), (5, 0.7, 0.01)])
    assert v.value == pytest.approx(0.7, abs=1e-12)
    assert "ZNE" in v.methods
    decay = zne_extrapolate([(s, math.exp(-0.1 * s), 0.0) for s in (1, 3, 5)])
    assert abs(decay.value - 1.0) < 0.02
    with pytest.raises(ValueError):
        zne_extrapolate([(1, 0.5, 0.1)])
    with pytest.raises(ValueError):
        zne_extrapolate([(1, 0.5, 0.1), (1, 0.4, 0.1)])


def test_zne_linear_for_two_points():
    v = zne_extrapolate([(1, 0.8, 0.0), (3, 0.6, 0.0)])
    assert v.value == pytest.approx(0.9)


def test_bootstrap():
    assert bootstrap_stderr(Counts({"0": 1000}), lambda c: c.frequency("0"), rng_seed=1) == 0
    coin = Counts({"0": 5000, "1": 5000})
    se = bootstrap_stderr(coin, {"0": 1.0, "1": -1.0}, rng_seed=2)
    assert abs(se - 0.01) < 0.001
    se_fn = bootstrap_stderr(coin, lambda c: c.frequency("0") - c.frequency("1"), resamples=300, rng_seed=3)
    assert abs(se_fn - 0.01) < 0.002
    with pytest.raises(ValueError):
        bootstrap_stderr(coin, {"0": 1.0}, resamples=50)
    with pytest.raises(ValueError):
        bootstrap_stderr(Counts({}, num_bits=1), {"0": 1.0})


def test_mitigated_value_invariants():
    with pytest.raises(ValueError):
        MitigatedValue(1.0, float("inf"))
    assert MitigatedValue(1, 0.1, {"REM"}).to_dict() == {"value": 1.0, "stderr": 0.1, "methods": ["REM"]}
