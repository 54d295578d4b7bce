"""Approximate evidence lower bound ``F_a = H_0 + L_a`` for a in {0, 2}.

``L_0`` replaces each component's expectation of ``J`` by ``J(mu_i)``; ``L_2``
adds the second-order Taylor correction, which with diagonal covariances only
involves the diagonal of the Hessian of ``J``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .joint import JointDensityModel
from .mixture import MixtureState, entropy_bound, entropy_bound_grads


@dataclass
class ComponentLinearization:
    """``J`` and its derivatives at each component mean.

    Attributes:
        C: (L,) values ``J(mu_i)``.
        D: (L, d) gradients at ``mu_i``.
        E: (L, d) Hessian diagonals at ``mu_i`` (``None`` if only first order).
    """

    C: np.ndarray
    D: np.ndarray
    E: np.ndarray | None = None

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.C)))


def linearize(model: JointDensityModel, means, order: int = 2) -> ComponentLinearization:
    means = np.atleast_2d(means)
    evals = [model(mu, order) for mu in means]
    C = np.array([e.value for e in evals])
    D = np.array([e.grad for e in evals]) if order >= 1 else None
    E = np.array([e.hess_diag for e in evals]) if order >= 2 else None
    return ComponentLinearization(C, D, E)


def _check_order(order):
    if order not in (0, 2):
        raise ValueError(f"order must be 0 or 2, got {order}")


def elbo_L0(q: MixtureState, lin: ComponentLinearization) -> float:
    return float(q.weights @ lin.C)


def elbo_L2(q: MixtureState, lin: ComponentLinearization) -> float:
    curvature = 0.5 * np.sum(q.variances * lin.E, axis=1)
    return float(q.weights @ (lin.C + curvature))


def elbo_F(q: MixtureState, lin: ComponentLinearization, order: int = 2) -> float:
    _check_order(order)
    L = elbo_L0(q, lin) if order == 0 else elbo_L2(q, lin)
    return entropy_bound(q) + L


def elbo_grads(q: MixtureState, lin: ComponentLinearization, order: int = 2, wrt=("w", "mu", "var")):
    """Gradients of ``F_order`` with respect to weights, means and variances.

    Returns a dict keyed by the entries of ``wrt``. The mean gradient of ``F_2``
    would need third derivatives of the forward model and raises
    ``NotImplementedError``.

    The mean gradient of ``L_0`` is ``w_i D_ij``: the weight multiplies ``J(mu_i)``
    so it carries through the derivative.
    """
    _check_order(order)
    if order == 2 and "mu" in wrt:
        raise NotImplementedError("d F_2 / d mu needs third derivatives of the forward model")
    dw_h, dmu_h, dvar_h = entropy_bound_grads(q)
    out = {}
    if "w" in wrt:
        dw = dw_h + lin.C
        if order == 2:
            dw = dw + 0.5 * np.sum(q.variances * lin.E, axis=1)
        out["w"] = dw
    if "mu" in wrt:
        out["mu"] = dmu_h + q.weights[:, None] * lin.D
    if "var" in wrt:
        out["var"] = dvar_h + (0.5 * q.weights[:, None] * lin.E if order == 2 else 0.0)
    return out
