"""
Annealing on a Gaussian mixture
===============================

With a fixed surrogate, gradient-free SVGD struggles once the target is
multimodal, because one surrogate cannot be close to every mode. Annealing
moves through ``p0^(1 - alpha) p^alpha`` and refits a kernel-curve surrogate
through the current particles at each temperature.
"""

import numpy as np

from gfsvgd.baselines import gf_ais
from gfsvgd.densities import GaussianMixture, IsotropicGaussian
from gfsvgd.discrepancy import Evaluator
from gfsvgd.transport import AnnealSchedule, UpdateConfig, run_annealed, run_gf_svgd, run_svgd

rng = np.random.default_rng(0)
d = 10
target = GaussianMixture(np.full(10, 0.1), rng.uniform(-1, 1, (10, d)), 1.0)
p0 = IsotropicGaussian(rng.uniform(-1, 1, d), 4.0)
evaluator = Evaluator.for_model(target, 1000, seed=1)
init = p0.sample_exact(100, seed=2)

T = 1000
config = UpdateConfig(iterations=T, bandwidth_scale=2.0)
schedule = AnnealSchedule.power(T)

# SVGD uses the target score; it is the reference point
X_svgd, _ = run_svgd(target, init, config)
X_gf, _ = run_gf_svgd(target, p0, init, config)
X_agf, rec = run_annealed(target, p0, schedule, init, config, mode="gradient_free",
                          smoothing_scale=0.6)
ais = gf_ais(target, p0, schedule, 100, seed=3, smoothing_scale=1.2)

for name, X, w in (("SVGD", X_svgd, None), ("GF-SVGD", X_gf, None),
                   ("AGF-SVGD", X_agf, None), ("GF-AIS", ais.positions, ais.weights)):
    report = evaluator.report(X, w)
    print(f"{name:<9} mmd2={report.mmd2:+.5f}  mse_mean={report.mse_mean:.4f}")

# the ESS trace shows how well the refitted surrogate tracks each temperature
print("min ESS during annealing:", round(min(rec.ess_history), 1))

# The narrow smoothing kernel (0.6 times the transport bandwidth) is a
# trade-off: a few seeds in twenty still diverge, see the README.
