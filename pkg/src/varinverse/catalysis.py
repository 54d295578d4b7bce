"""Nitrate reduction kinetics: scaled linear ODE model with parameter sensitivities.

Species order is NO3-, NO2-, X, N2, NH3, N2O. Concentrations are scaled by
500 mmol/L and time by 180 min, and the parameters are ``xi_j = log kappa_j``
with ``kappa_j = k_j * 180 min``. The intermediate X is never observed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.stats import norm

from .joint import (
    ForwardModel,
    ForwardOutput,
    GaussianPrior,
    IsoGaussianLikelihood,
    JointDensityModel,
)

SPECIES = ("NO3", "NO2", "X", "N2", "NH3", "N2O")
OBSERVED = (0, 1, 3, 4, 5)
CONC_SCALE = 500.0
TIME_SCALE = 180.0
N_RATES = 5
N_SPECIES = 6


class IntegrationError(RuntimeError):
    pass


def _rate_basis() -> np.ndarray:
    # B[j] = dA/dkappa_j for the linear system du/dtau = A(kappa) u
    B = np.zeros((N_RATES, N_SPECIES, N_SPECIES))
    for j, (src, dst) in enumerate([(0, 1), (1, 2), (2, 3), (1, 4), (1, 5)]):
        B[j, src, src] = -1.0
        B[j, dst, src] = 1.0
    return B


RATE_BASIS = _rate_basis()


def rate_matrix(xi) -> np.ndarray:
    kappa = np.exp(np.asarray(xi, dtype=float))
    return np.tensordot(kappa, RATE_BASIS, axes=1)


@dataclass
class CatalysisData:
    """Scaled measurements.

    Attributes:
        times: (6,) scaled measurement times ``1/6, ..., 1``.
        y: (30,) observations, time-major over the species NO3-, NO2-, N2, NH3, N2O.
        u0: (6,) scaled initial condition.
    """

    times: np.ndarray
    y: np.ndarray
    u0: np.ndarray


def load_catalysis_data(include_initial_row: bool = False) -> CatalysisData:
    """Read the bundled measurement table and apply the time/concentration scaling.

    By default the t=0 row only provides the initial condition. With
    ``include_initial_row`` it is also appended to the observations (35 entries,
    zero residual by construction), which shifts the noise estimate.
    """
    text = resources.files("varinverse.data").joinpath("catalysis_table1.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    cols = [s for i, s in enumerate(SPECIES) if i in OBSERVED]
    t = np.array([float(r["t_min"]) for r in rows])
    obs = np.array([[float(r[c]) for c in cols] for r in rows]) / CONC_SCALE
    u0 = np.zeros(N_SPECIES)
    u0[list(OBSERVED)] = obs[0]
    first = 0 if include_initial_row else 1
    return CatalysisData(times=t[first:] / TIME_SCALE, y=obs[first:].reshape(-1), u0=u0)


def _augmented_matrix(xi, order: int) -> np.ndarray:
    """Generator of the linear system for ``(u, v_1..v_5, w_1..w_5)``.

    ``v_j = du/dxi_j`` and ``w_j = d^2u/dxi_j^2``. With ``g = A(kappa) u`` and
    ``dkappa_j/dxi_j = kappa_j``:

        v_j' = A v_j + kappa_j B_j u
        w_j' = A w_j + 2 kappa_j B_j v_j + kappa_j B_j u
    """
    kappa = np.exp(np.asarray(xi, dtype=float))
    A = np.tensordot(kappa, RATE_BASIS, axes=1)
    n = N_SPECIES
    nblocks = 1 + N_RATES * order
    M = np.zeros((n * nblocks, n * nblocks))
    M[:n, :n] = A
    for j in range(N_RATES if order >= 1 else 0):
        F = kappa[j] * RATE_BASIS[j]
        v = slice(n * (1 + j), n * (2 + j))
        M[v, v] = A
        M[v, :n] = F
        if order >= 2:
            w = slice(n * (1 + N_RATES + j), n * (2 + N_RATES + j))
            M[w, w] = A
            M[w, v] = 2.0 * F
            M[w, :n] = F
    return M


def solve_kinetics(xi, times, u0=None, order: int = 0, rtol: float = 1e-10, atol: float = 1e-12,
                   method: str = "RK45") -> np.ndarray:
    """Integrate the scaled kinetics (and sensitivities) to the requested times.

    Returns an array of shape (len(times), 1 + 5*order, 6): block 0 is ``u``,
    blocks ``1..5`` are ``du/dxi_j`` and blocks ``6..10`` are ``d^2u/dxi_j^2``.
    ``method`` is an adaptive explicit Runge-Kutta scheme understood by
    :func:`scipy.integrate.solve_ivp`, or ``"expm"`` for the exact matrix
    exponential of the (linear, constant-coefficient) augmented system.
    """
    times = np.asarray(times, dtype=float)
    if u0 is None:
        u0 = np.eye(N_SPECIES)[0]
    M = _augmented_matrix(xi, order)
    y0 = np.zeros(M.shape[0])
    y0[:N_SPECIES] = u0
    nblocks = M.shape[0] // N_SPECIES

    if method == "expm":
        out = np.empty((len(times), M.shape[0]))
        t_prev, state = 0.0, y0
        for k, t in enumerate(times):
            state = expm(M * (t - t_prev)) @ state
            out[k], t_prev = state, t
        return out.reshape(len(times), nblocks, N_SPECIES)

    sol = solve_ivp(
        lambda t, y: M @ y,
        (0.0, float(times[-1])),
        y0,
        method=method,
        t_eval=times,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        raise IntegrationError(sol.message)
    return sol.y.T.reshape(len(times), nblocks, N_SPECIES)


class CatalysisForward(ForwardModel):
    """Observation map ``xi -> (u_obs(tau_1), ..., u_obs(tau_6))`` in R^30."""

    dim_in = N_RATES

    def __init__(self, data: CatalysisData | None = None, method="RK45", rtol=1e-10, atol=1e-12):
        self.data = data if data is not None else load_catalysis_data()
        self.dim_out = len(self.data.times) * len(OBSERVED)
        self.method = method
        self.rtol = rtol
        self.atol = atol

    def evaluate(self, xi, order=2):
        sol = solve_kinetics(xi, self.data.times, self.data.u0, order,
                             self.rtol, self.atol, self.method)
        obs = sol[:, :, OBSERVED]  # (T, blocks, 5 species)
        f = obs[:, 0, :].reshape(-1)
        if order == 0:
            return ForwardOutput(f)
        jac = obs[:, 1 : 1 + N_RATES, :].transpose(0, 2, 1).reshape(-1, N_RATES)
        if order == 1:
            return ForwardOutput(f, jac)
        hess = obs[:, 1 + N_RATES :, :].transpose(0, 2, 1).reshape(-1, N_RATES)
        return ForwardOutput(f, jac, hess)


def catalysis_model(method="RK45", include_initial_row=False, **kwargs) -> JointDensityModel:
    """Joint density with ``N(0, 1)`` priors on ``xi`` and ``N(-1, 1)`` on ``theta``."""
    data = load_catalysis_data(include_initial_row)
    fwd = CatalysisForward(data, method=method, **kwargs)
    return JointDensityModel(
        fwd,
        IsoGaussianLikelihood(),
        GaussianPrior(np.zeros(N_RATES), 1.0),
        GaussianPrior([-1.0], 1.0),
        fwd.data.y,
    )


def rate_summary(mean, variance) -> dict:
    """Log-normal medians and 95% intervals of ``k_j = exp(xi_j) / 180`` (1/min)
    and ``sigma = exp(theta)``, given Gaussian marginals of ``(xi_1..xi_5, theta)``.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.asarray(variance, dtype=float))
    z = norm.ppf([0.025, 0.5, 0.975])
    logq = mean[:, None] + sd[:, None] * z[None, :]
    logq[:N_RATES] -= np.log(TIME_SCALE)
    vals = np.exp(logq)
    names = [f"k{j + 1}" for j in range(N_RATES)] + ["sigma"]
    return {
        name: {"median": float(v[1]), "lower": float(v[0]), "upper": float(v[2])}
        for name, v in zip(names, vals)
    }
