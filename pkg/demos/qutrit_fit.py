"""Fit the three qutrit relaxation rates to a noisy synthetic trace."""
import numpy as np

from deskqc.noise import REFERENCE_QUTRIT_LIFETIMES, QutritRates, fit_qutrit_rates, synthetic_qutrit_trace

truth = QutritRates.from_lifetimes(*REFERENCE_QUTRIT_LIFETIMES)
fit = fit_qutrit_rates(synthetic_qutrit_trace(truth, np.linspace(0, 300, 30), 0.01, rng_seed=0))
for name, est, err, ref in zip(("1/G10", "1/G21", "1/G20"), fit.lifetimes, fit.lifetime_stderr,
                               REFERENCE_QUTRIT_LIFETIMES):
    print(f"{name}: {est:6.2f} ± {err:.2f} us  (generated with {ref} us)")
