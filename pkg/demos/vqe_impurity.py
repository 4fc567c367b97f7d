"""VQE for the single-bath impurity model: exact-expectation and 5000-shot runs."""
from deskqc.vqe import AimParams, exact_ground_energy, vqe_optimize

p = AimParams.reference_setting()
exact = vqe_optimize(p, None, 200, rng_seed=1)
shots = vqe_optimize(p, 5000, 200, rng_seed=1)
print(f"exact ground energy     {exact_ground_energy(p):.6f}")
print(f"ansatz optimum (exact)  {exact.final.energy:.6f} after {len(exact.iterations) - 1} iterations")
print(f"ansatz optimum (shots)  {shots.final.energy:.4f} ± {shots.final.stderr:.4f}")
print(f"relative error          {100 * exact.relative_error:.2f}%")
