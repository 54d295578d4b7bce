"""
Sanity check on a conjugate model
=================================

With a linear forward model, Gaussian noise and a Gaussian prior the posterior
is Gaussian and known in closed form. A single-component fit should land on it.
"""

import numpy as np

from varinverse import (
    FitConfig,
    GaussianPrior,
    IsoGaussianLikelihood,
    JointDensityModel,
    LinearForward,
    fit,
)

rng = np.random.default_rng(1)
# orthogonal columns keep the exact posterior covariance diagonal
Q, _ = np.linalg.qr(rng.normal(size=(8, 3)))
A = Q * np.array([3.0, 1.0, 0.4])
truth = np.array([0.7, -1.2, 0.3])
noise = 0.2
y = A @ truth + noise * rng.normal(size=8)

model = JointDensityModel(LinearForward(A), IsoGaussianLikelihood(np.log(noise)),
                          GaussianPrior(np.zeros(3), 1.0), None, y)
report = fit(model, FitConfig(L=1))

cov = np.linalg.inv(A.T @ A / noise**2 + np.eye(3))
mean = cov @ A.T @ y / noise**2
print("fitted mean ", report.state.means[0].round(6))
print("exact mean  ", mean.round(6))
print("fitted sd   ", np.sqrt(report.state.variances[0]).round(6))
print("exact sd    ", np.sqrt(np.diag(cov)).round(6))
print("F2 per sweep", report.F2_trace.round(6), "forward calls", report.n_forward)
