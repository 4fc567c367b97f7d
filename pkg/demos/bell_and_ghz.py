"""CHSH scan and GHZ/Mermin checks on the noiseless and the bundled 'good' backend."""
import math

from deskqc import Backend, bundled_profile
from deskqc.bell import chsh_scan, default_thetas, ghz_fidelity, mermin_estimate

good = Backend(bundled_profile("good"))

print("theta    S(noiseless)   S(good, REM)   theory")
clean = chsh_scan(default_thetas(8), 4000, rng_seed=3, resamples=200)
noisy = chsh_scan(default_thetas(8), 4000, rem=True, backend=good, rng_seed=3, resamples=200)
for a, b in zip(clean, noisy):
    print(f"{a.theta:5.3f}  {a.estimate.value:+.3f}±{a.estimate.stderr:.3f}  "
          f"{b.estimate.value:+.3f}±{b.estimate.stderr:.3f}  {a.theory:+.3f}")

m = mermin_estimate(4000, rem=True, backend=good, rng_seed=4, resamples=200)
print(f"\nMermin M5 on 'good': raw {m.raw_aggregate.value:.2f}, REM {m.aggregate.value:.2f} "
      f"(classical bound 4, quantum 16)")
f = ghz_fidelity(None, good)
print(f"GHZ5 fidelity on 'good' (exact probabilities): {f.value:.3f}; Tsirelson bound {2 * math.sqrt(2):.3f}")
