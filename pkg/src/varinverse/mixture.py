"""Diagonal Gaussian mixtures and the Jensen lower bound on their entropy."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

LOG_2PI = np.log(2.0 * np.pi)

VAR_LO = 1e-6
VAR_HI = 1e2


@dataclass
class MixtureState:
    """An L-component Gaussian mixture with diagonal covariances.

    Attributes:
        weights: (L,) mixture weights on the probability simplex.
        means: (L, d) component means.
        variances: (L, d) diagonal entries of the component covariances.
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.variances = np.atleast_2d(np.asarray(self.variances, dtype=float))
        L = self.weights.shape[0]
        if L < 1 or self.means.shape[0] != L or self.means.shape[1] < 1:
            raise ValueError(
                f"inconsistent shapes: weights {self.weights.shape}, means {self.means.shape}"
            )
        if self.variances.shape != self.means.shape:
            raise ValueError(
                f"variances {self.variances.shape} do not match means {self.means.shape}"
            )
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be non-negative and sum to one")
        if np.any(~(self.variances > 0)):
            raise ValueError("variances must be strictly positive")

    @property
    def L(self) -> int:
        return self.weights.shape[0]

    @property
    def d(self) -> int:
        return self.means.shape[1]

    @classmethod
    def isotropic(cls, means, variance=1.0) -> MixtureState:
        """Equal weights and identical isotropic variances around ``means``."""
        means = np.atleast_2d(np.asarray(means, dtype=float))
        L = means.shape[0]
        return cls(np.full(L, 1.0 / L), means, np.full_like(means, variance))

    def copy(self) -> MixtureState:
        return MixtureState(self.weights.copy(), self.means.copy(), self.variances.copy())

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``n`` samples, returned as an (n, d) array."""
        comp = rng.choice(self.L, size=n, p=self.weights)
        z = rng.standard_normal((n, self.d))
        return self.means[comp] + np.sqrt(self.variances[comp]) * z

    def to_dict(self) -> dict:
        return {
            "L": self.L,
            "d": self.d,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> MixtureState:
        state = cls(doc["weights"], doc["means"], doc["variances"])
        if state.L != doc.get("L", state.L) or state.d != doc.get("d", state.d):
            raise ValueError("declared L/d do not match the arrays")
        return state

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> MixtureState:
        return cls.from_dict(json.loads(text))


def _component_logpdf(q: MixtureState, omega: np.ndarray) -> np.ndarray:
    # (..., L) log N(omega | mu_i, diag(var_i))
    diff = omega[..., None, :] - q.means
    return -0.5 * (
        q.d * LOG_2PI
        + np.sum(np.log(q.variances), axis=-1)
        + np.sum(diff**2 / q.variances, axis=-1)
    )


def mixture_logpdf(q: MixtureState, omega) -> np.ndarray | float:
    """Log density of the mixture at ``omega`` (shape (d,) or (n, d))."""
    omega = np.asarray(omega, dtype=float)
    if omega.shape[-1] != q.d:
        raise ValueError(f"point has dimension {omega.shape[-1]}, mixture has {q.d}")
    with np.errstate(divide="ignore"):
        logw = np.log(q.weights)
    out = logsumexp(_component_logpdf(q, omega) + logw, axis=-1)
    return float(out) if out.ndim == 0 else out


def _pairwise(q: MixtureState):
    """Pairwise convolution terms shared by the bound and its gradients.

    Returns ``S[r, i] = var_r + var_i`` (L, L, d), ``A[r, i] = (mu_r - mu_i) / S``
    and ``logN[r, i] = log N(mu_r | mu_i, S[r, i])``.
    """
    S = q.variances[:, None, :] + q.variances[None, :, :]
    diff = q.means[:, None, :] - q.means[None, :, :]
    A = diff / S
    logN = -0.5 * (q.d * LOG_2PI + np.sum(np.log(S), axis=-1) + np.sum(diff * A, axis=-1))
    return S, A, logN


def _log_qi(q: MixtureState, logN: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        logw = np.log(q.weights)
    return logsumexp(logN + logw[:, None], axis=0)


def entropy_bound(q: MixtureState) -> float:
    """Jensen lower bound ``-sum_i w_i log q_i`` on the mixture entropy,
    with ``q_i = sum_j w_j N(mu_i | mu_j, Sigma_i + Sigma_j)``."""
    _, _, logN = _pairwise(q)
    log_q = _log_qi(q, logN)
    active = q.weights > 0
    return float(-np.sum(q.weights[active] * log_q[active]))


def entropy_bound_grads(q: MixtureState):
    """Gradients of :func:`entropy_bound`.

    Returns:
        (dw, dmu, dvar) with shapes (L,), (L, d), (L, d). ``dvar`` holds the
        derivatives with respect to the diagonal covariance entries.
    """
    S, A, logN = _pairwise(q)
    w = q.weights
    log_q = _log_qi(q, logN)
    # N_ri / q_r and N_ri / q_i, evaluated in log space
    n_over_qr = np.exp(logN - log_q[:, None])
    n_over_qi = np.exp(logN - log_q[None, :])

    dw = -log_q - np.sum(w[:, None] * n_over_qr, axis=0)

    # K[r, i] = w_r N_ri (1/q_i + 1/q_r)
    K = w[:, None] * (n_over_qi + n_over_qr)
    dmu = -w[:, None] * np.einsum("ri,rij->ij", K, A)
    # d N / d S = N (A^2 - 1/S) / 2
    dvar = 0.5 * w[:, None] * np.einsum("ri,rij->ij", K, 1.0 / S - A**2)
    return dw, dmu, dvar
