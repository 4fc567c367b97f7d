"""Three-flavour oscillation scan and the trefoil trace estimate."""
import numpy as np

from deskqc.jones import BraidWord, default_theta_grid, estimate_knot_trace
from deskqc.neutrino import default_points, first_mu_minimum, oscillation_scan

print(f"first nu_mu minimum at L/E = {first_mu_minimum():.0f} km/GeV")
for p in oscillation_scan(default_points(6, 4000), 3000, rng_seed=2, resamples=200):
    print(f"L/E={p.L_over_E:7.1f}  p_mu={p.probabilities[1]:.3f}±{p.stderrs[1]:.3f}  theory={p.theory[1]:.3f}")

for r in estimate_knot_trace(BraidWord.trefoil(), default_theta_grid()[::5], 5000, (), rng_seed=9, resamples=200):
    est = r.trace_estimate("raw")
    print(f"theta={r.theta:.3f}  tr estimate {est:.3f}  exact {r.trace_theory:.3f}  "
          f"Jones value {np.round(r.jones_value, 4)}")
